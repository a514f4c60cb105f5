//! Noise approximators: the forward network predicting `x_t - x0` and the
//! reverse network predicting the unit Gaussian that generated `x_t`.
//!
//! Both sit behind [`Approximator`]. Concrete kinds are a small dense network
//! ([`Mlp`]) and closed-form oracles used to exercise the samplers without
//! training.

mod checkpoint;
mod mlp;
mod oracle;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use mlp::{Activation, ForwardCache, Mlp, MlpConfig, TimeEmbedding};
pub use oracle::{
    analytic_forward_oracle, analytic_reverse_oracle, ForwardOracle, GaussianPosterior,
    ReverseOracle,
};

use crate::error::Result;

/// Position on the discrete time grid: `index` out of `total` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub index: usize,
    pub total: usize,
}

impl Step {
    pub fn new(index: usize, total: usize) -> Self {
        Self { index, total }
    }

    /// Continuous time `index / total`.
    pub fn frac(self) -> f64 {
        self.index as f64 / self.total as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ApproxKind {
    Mlp,
    AnalyticForward,
    AnalyticReverse,
    AnalyticGaussian,
}

impl ApproxKind {
    pub fn tag(self) -> u32 {
        match self {
            ApproxKind::Mlp => 0,
            ApproxKind::AnalyticForward => 1,
            ApproxKind::AnalyticReverse => 2,
            ApproxKind::AnalyticGaussian => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => ApproxKind::Mlp,
            1 => ApproxKind::AnalyticForward,
            2 => ApproxKind::AnalyticReverse,
            3 => ApproxKind::AnalyticGaussian,
            _ => return None,
        })
    }
}

/// A map `(x_t, t[, y]) -> vector` with the same dimension as `x_t`.
///
/// `evaluate` must be a pure function of its inputs and the parameters.
pub trait Approximator: Send + Sync {
    fn kind(&self) -> ApproxKind;

    fn dim(&self) -> usize;

    fn evaluate(&self, x_t: &[f64], step: Step, y: Option<&[f64]>) -> Result<Vec<f64>>;

    /// Flat parameter vector; empty for oracles.
    fn params(&self) -> &[f64] {
        &[]
    }
}

/// Any approximator that can be stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mlp(Mlp),
    Forward(ForwardOracle),
    Reverse(ReverseOracle),
    Gaussian(GaussianPosterior),
}

impl Model {
    fn inner(&self) -> &dyn Approximator {
        match self {
            Model::Mlp(m) => m,
            Model::Forward(m) => m,
            Model::Reverse(m) => m,
            Model::Gaussian(m) => m,
        }
    }

    pub fn as_mlp(&self) -> Option<&Mlp> {
        match self {
            Model::Mlp(m) => Some(m),
            _ => None,
        }
    }
}

impl Approximator for Model {
    fn kind(&self) -> ApproxKind {
        self.inner().kind()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn evaluate(&self, x_t: &[f64], step: Step, y: Option<&[f64]>) -> Result<Vec<f64>> {
        self.inner().evaluate(x_t, step, y)
    }

    fn params(&self) -> &[f64] {
        self.inner().params()
    }
}

impl From<Mlp> for Model {
    fn from(m: Mlp) -> Self {
        Model::Mlp(m)
    }
}

impl From<ForwardOracle> for Model {
    fn from(m: ForwardOracle) -> Self {
        Model::Forward(m)
    }
}

impl From<ReverseOracle> for Model {
    fn from(m: ReverseOracle) -> Self {
        Model::Reverse(m)
    }
}

impl From<GaussianPosterior> for Model {
    fn from(m: GaussianPosterior) -> Self {
        Model::Gaussian(m)
    }
}
