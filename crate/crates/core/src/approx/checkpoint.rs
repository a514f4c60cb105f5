//! Checkpoint file:
//!
//! ```text
//! "DABR" | u32 version | u32 kind tag | config block | u64 n | n × f64 params
//! ```
//!
//! All integers and floats are little-endian. The config block depends on the
//! kind: MLPs store their widths and options, oracles store their defining
//! vectors as tensor blocks (`u64` length + `f64`s) and carry no parameters.

use std::path::Path;

use super::{
    Activation, ApproxKind, ForwardOracle, GaussianPosterior, Mlp, MlpConfig, Model,
    ReverseOracle, TimeEmbedding,
};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DABR";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let kind = match model {
        Model::Mlp(_) => ApproxKind::Mlp,
        Model::Forward(_) => ApproxKind::AnalyticForward,
        Model::Reverse(_) => ApproxKind::AnalyticReverse,
        Model::Gaussian(_) => ApproxKind::AnalyticGaussian,
    };
    w.u32(kind.tag());
    match model {
        Model::Mlp(m) => {
            let c = m.config();
            w.u32(c.layer_widths.len() as u32);
            for &width in &c.layer_widths {
                w.u32(width as u32);
            }
            w.u32(match c.activation {
                Activation::Tanh => 0,
                Activation::Relu => 1,
            });
            let (tag, k) = match c.time_embedding {
                TimeEmbedding::None => (0, 0),
                TimeEmbedding::Scalar => (1, 0),
                TimeEmbedding::Sinusoidal(k) => (2, k as u32),
            };
            w.u32(tag);
            w.u32(k);
            w.u32(c.conditional as u32);
            w.u32(c.zero_final as u32);
            w.u64(c.init_seed);
            w.tensor(super::Approximator::params(m));
        }
        Model::Forward(o) => {
            w.tensor(o.x0());
            w.tensor(&[]);
        }
        Model::Reverse(o) => {
            w.tensor(o.x0());
            w.tensor(o.y());
            w.tensor(&[]);
        }
        Model::Gaussian(o) => {
            w.tensor(&o.mean);
            w.f64s(&[o.sd, o.coupling]);
            w.tensor(&o.shift);
            w.tensor(&[]);
        }
    }
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let tag = r.u32()?;
    let kind = ApproxKind::from_tag(tag).ok_or_else(|| r.error(format!("unknown kind tag {tag}")))?;
    let model = match kind {
        ApproxKind::Mlp => {
            let n = r.u32()? as usize;
            if n > 64 {
                return Err(r.error(format!("implausible layer count {n}")));
            }
            let mut layer_widths = Vec::with_capacity(n);
            for _ in 0..n {
                layer_widths.push(r.u32()? as usize);
            }
            let activation = match r.u32()? {
                0 => Activation::Tanh,
                1 => Activation::Relu,
                a => return Err(r.error(format!("unknown activation {a}"))),
            };
            let tag = r.u32()?;
            let k = r.u32()? as usize;
            let time_embedding = match tag {
                0 => TimeEmbedding::None,
                1 => TimeEmbedding::Scalar,
                2 => TimeEmbedding::Sinusoidal(k),
                e => return Err(r.error(format!("unknown time embedding {e}"))),
            };
            let conditional = r.u32()? != 0;
            let zero_final = r.u32()? != 0;
            let init_seed = r.u64()?;
            let config = MlpConfig {
                layer_widths,
                activation,
                time_embedding,
                conditional,
                zero_final,
                init_seed,
            };
            config.validate().map_err(|e| r.error(e.to_string()))?;
            let at = r.offset();
            let params = r.tensor()?;
            if params.len() != config.param_count() {
                return Err(Error::Format {
                    what: "checkpoint",
                    offset: at,
                    reason: format!(
                        "{} parameters for a network that needs {}",
                        params.len(),
                        config.param_count()
                    ),
                });
            }
            Model::Mlp(Mlp::from_params(config, params)?)
        }
        ApproxKind::AnalyticForward => {
            let x0 = r.tensor()?;
            empty_params(&mut r)?;
            Model::Forward(ForwardOracle::new(x0))
        }
        ApproxKind::AnalyticReverse => {
            let x0 = r.tensor()?;
            let y = r.tensor()?;
            empty_params(&mut r)?;
            Model::Reverse(ReverseOracle::new(x0, y).map_err(|e| r.error(e.to_string()))?)
        }
        ApproxKind::AnalyticGaussian => {
            let mean = r.tensor()?;
            let scalars = r.f64s(2)?;
            let shift = r.tensor()?;
            empty_params(&mut r)?;
            Model::Gaussian(
                GaussianPosterior::new(mean, scalars[0], scalars[1], shift)
                    .map_err(|e| r.error(e.to_string()))?,
            )
        }
    };
    r.expect_end()?;
    Ok(model)
}

fn empty_params(r: &mut Reader<'_>) -> Result<()> {
    let p = r.tensor()?;
    if p.is_empty() {
        Ok(())
    } else {
        Err(r.error("oracle checkpoints carry no parameters"))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
