//! Brownian-bridge process pinned at `y` when `t = 1`.
//!
//! The forward SDE `dX = -(X - Y)/(1 - t) dt + g(t) dW` has Gaussian marginals
//! `N((1-t) x0 + t y, G(t) I)` with `G(t) = (1-t)^2 ∫_0^t g(s)^2 / (1-s)^2 ds`.
//! Continuous time is always `t = index / steps`; samplers walk the index from
//! `steps` down to `0`.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::rng::Stream;

/// Continuous-time operations that divide by `G(t)` or `1 - t` reject times
/// closer than this to the endpoints.
pub const TIME_EPS: f64 = 1e-9;

/// Trapezoid panels used for `G(t)` when `g` is not identically one.
pub const QUADRATURE_PANELS: usize = 4096;

/// Noise scale `g(t)` of the forward SDE.
#[derive(Clone, Default)]
pub enum NoiseScale {
    /// `g ≡ 1`, giving `G(t) = t (1 - t)`.
    #[default]
    Unit,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl NoiseScale {
    pub fn custom(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        NoiseScale::Custom(Arc::new(g))
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            NoiseScale::Unit => 1.0,
            NoiseScale::Custom(g) => g(t),
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, NoiseScale::Unit)
    }
}

impl fmt::Debug for NoiseScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseScale::Unit => f.write_str("Unit"),
            NoiseScale::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Discretisation of `[0, 1]` into `steps` intervals with precomputed variance
/// tables.
#[derive(Clone, Debug)]
pub struct BridgeSchedule {
    steps: usize,
    noise: NoiseScale,
    g_table: Vec<f64>,
    b_table: Vec<f64>,
}

impl BridgeSchedule {
    /// Schedule with `g ≡ 1`.
    pub fn new(steps: usize) -> Result<Self> {
        Self::with_noise(steps, NoiseScale::Unit)
    }

    pub fn with_noise(steps: usize, noise: NoiseScale) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let g_table: Vec<f64> = (0..=steps)
            .map(|k| variance_with(&noise, k as f64 / steps as f64))
            .collect();
        let b_table = if noise.is_unit() {
            (0..=steps).map(|k| unit_b(k, steps)).collect()
        } else {
            g_table.iter().map(|g| g.sqrt()).collect()
        };
        Ok(Self {
            steps,
            noise,
            g_table,
            b_table,
        })
    }

    /// `T`, the number of discrete steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn noise(&self) -> &NoiseScale {
        &self.noise
    }

    /// `1 / T`.
    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// Continuous time of a step index.
    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.steps as f64
    }

    /// Tabulated `G(index / T)`.
    pub fn g_at(&self, index: usize) -> f64 {
        self.g_table[index]
    }

    /// Tabulated `B(index)`.
    pub fn b_at(&self, index: usize) -> f64 {
        self.b_table[index]
    }

    pub fn g_table(&self) -> &[f64] {
        &self.g_table
    }

    pub fn b_table(&self) -> &[f64] {
        &self.b_table
    }
}

/// A point on a bridge trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeState {
    pub x: Vec<f64>,
    pub t_index: usize,
}

fn unit_b(index: usize, steps: usize) -> f64 {
    // exact in integers before the root
    let prod = (index as u128) * ((steps - index) as u128);
    (prod as f64).sqrt() / steps as f64
}

fn variance_with(noise: &NoiseScale, t: f64) -> f64 {
    match noise {
        NoiseScale::Unit => t * (1.0 - t),
        NoiseScale::Custom(g) => {
            if t <= 0.0 || t >= 1.0 {
                // empty integral at 0; (1-t)^2 kills the divergence at 1
                return 0.0;
            }
            let h = t / QUADRATURE_PANELS as f64;
            let f = |s: f64| {
                let gs = g(s);
                gs * gs / ((1.0 - s) * (1.0 - s))
            };
            let mut acc = 0.5 * (f(0.0) + f(t));
            for k in 1..QUADRATURE_PANELS {
                acc += f(k as f64 * h);
            }
            (1.0 - t) * (1.0 - t) * acc * h
        }
    }
}

fn check_unit_interval(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { t, lo: 0.0, hi: 1.0 })
    }
}

/// Marginal variance `G(t)` of the bridge.
pub fn variance_g(t: f64, schedule: &BridgeSchedule) -> Result<f64> {
    check_unit_interval(t)?;
    Ok(variance_with(&schedule.noise, t))
}

/// `B(index) = sqrt(G(index / T))`, i.e. `(1/T) sqrt(index (T - index))` for
/// unit noise.
pub fn discrete_b(t_index: usize, schedule: &BridgeSchedule) -> Result<f64> {
    if t_index > schedule.steps {
        return Err(Error::StepRange {
            index: t_index,
            steps: schedule.steps,
        });
    }
    Ok(schedule.b_table[t_index])
}

/// `(1 - t) x0 + t y + sqrt(G(t)) noise`.
pub fn sample_marginal(
    x0: &[f64],
    y: &[f64],
    t: f64,
    noise: &[f64],
    schedule: &BridgeSchedule,
) -> Result<Vec<f64>> {
    check_unit_interval(t)?;
    let sd = variance_with(&schedule.noise, t).sqrt();
    marginal_with_scale(x0, y, t, sd, noise)
}

/// Marginal point with an explicit noise scale; used with tabulated `B(t)`.
pub(crate) fn marginal_with_scale(
    x0: &[f64],
    y: &[f64],
    t: f64,
    scale: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_dim("marginal y", x0.len(), y.len())?;
    check_dim("marginal noise", x0.len(), noise.len())?;
    Ok(x0
        .iter()
        .zip(y)
        .zip(noise)
        .map(|((&a, &b), &n)| (1.0 - t) * a + t * b + scale * n)
        .collect())
}

fn check_interior(t: f64, what: &'static str) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain { t, lo: 0.0, hi: 1.0 });
    }
    if t < TIME_EPS || t > 1.0 - TIME_EPS {
        return Err(Error::Singular { t, what });
    }
    Ok(())
}

/// Score of the conditional marginal, `-(x_t - (1-t) x0 - t y) / G(t)`.
pub fn score(
    x_t: &[f64],
    x0: &[f64],
    y: &[f64],
    t: f64,
    schedule: &BridgeSchedule,
) -> Result<Vec<f64>> {
    check_interior(t, "score divides by G(t)")?;
    check_dim("score x0", x_t.len(), x0.len())?;
    check_dim("score y", x_t.len(), y.len())?;
    let g = variance_with(&schedule.noise, t);
    if g <= 0.0 {
        return Err(Error::Singular {
            t,
            what: "score divides by G(t)",
        });
    }
    Ok(x_t
        .iter()
        .zip(x0)
        .zip(y)
        .map(|((&x, &a), &b)| -(x - (1.0 - t) * a - t * b) / g)
        .collect())
}

/// Forward drift `-(x - y) / (1 - t)`.
pub fn forward_drift(x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::Domain { t, lo: 0.0, hi: 1.0 });
    }
    if t >= 1.0 - TIME_EPS {
        return Err(Error::Singular {
            t,
            what: "drift divides by 1 - t",
        });
    }
    check_dim("drift y", x.len(), y.len())?;
    let inv = 1.0 / (1.0 - t);
    Ok(x.iter().zip(y).map(|(&a, &b)| -(a - b) * inv).collect())
}

/// Euler-Maruyama path of the forward SDE, driven by externally supplied
/// standard-normal increments.
///
/// Yields `x_0 … x_T`. The final step would evaluate the drift at `t = 1`, so
/// `x_T` is pinned to `y` instead.
pub struct ForwardSdePath<'a, F> {
    y: &'a [f64],
    schedule: &'a BridgeSchedule,
    x: Vec<f64>,
    next_index: usize,
    noise: F,
    xi: Vec<f64>,
}

impl<'a, F: FnMut(&mut [f64])> ForwardSdePath<'a, F> {
    pub fn new(x0: &[f64], y: &'a [f64], schedule: &'a BridgeSchedule, noise: F) -> Result<Self> {
        if schedule.steps < 2 {
            return Err(Error::Config("forward simulation needs T >= 2".into()));
        }
        check_dim("forward sde y", x0.len(), y.len())?;
        Ok(Self {
            y,
            schedule,
            x: x0.to_vec(),
            next_index: 0,
            noise,
            xi: vec![0.0; x0.len()],
        })
    }

    fn advance(&mut self) -> Result<()> {
        let k = self.next_index - 1;
        let steps = self.schedule.steps;
        if k + 1 == steps {
            self.x.copy_from_slice(self.y);
            return Ok(());
        }
        let t = self.schedule.time(k);
        let dt = self.schedule.dt();
        let drift = forward_drift(&self.x, self.y, t)?;
        let diffusion = self.schedule.noise.at(t) * dt.sqrt();
        (self.noise)(&mut self.xi);
        for ((x, d), z) in self.x.iter_mut().zip(&drift).zip(&self.xi) {
            *x += d * dt + diffusion * z;
        }
        Ok(())
    }
}

impl<F: FnMut(&mut [f64])> Iterator for ForwardSdePath<'_, F> {
    type Item = Result<BridgeState>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index > self.schedule.steps {
            return None;
        }
        if self.next_index > 0 {
            if let Err(e) = self.advance() {
                self.next_index = self.schedule.steps + 1;
                return Some(Err(e));
            }
        }
        let state = BridgeState {
            x: self.x.clone(),
            t_index: self.next_index,
        };
        self.next_index += 1;
        Some(Ok(state))
    }
}

/// Full Euler-Maruyama trajectory `x_0 … x_T` of the forward SDE.
pub fn simulate_forward_sde(
    x0: &[f64],
    y: &[f64],
    schedule: &BridgeSchedule,
    stream: &mut Stream,
) -> Result<Vec<BridgeState>> {
    let path = ForwardSdePath::new(x0, y, schedule, |xi: &mut [f64]| {
        for v in xi.iter_mut() {
            *v = stream.normal();
        }
    })?;
    path.collect()
}
