//! Dual-approximator Brownian-bridge translation at desk scale.
//!
//! The forward approximator predicts `x_t - x0`; the reverse approximator
//! predicts the unit Gaussian that produced `x_t`. Together they replace the
//! per-step noise of the reverse bridge SDE, so a run's only randomness is a
//! single draw at `t = T`.
//!
//! Modules, bottom up: [`bridge`] (closed-form process math), [`approx`]
//! (networks and oracles), [`train`], [`sampling`], [`datasets`], [`eval`],
//! and [`experiment`] (the orchestration behind the CLI).

pub mod approx;
mod binio;
pub mod bridge;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod rng;
pub mod sampling;
pub mod train;

pub use approx::{Approximator, Model, Step};
pub use bridge::{BridgeSchedule, BridgeState};
pub use datasets::{PairedDataset, PairedSample};
pub use error::{Error, Result};
pub use eval::{MetricsReport, MetricsRow};
pub use experiment::ExperimentConfig;
pub use rng::Stream;
pub use sampling::{SamplerKind, SamplerRun};
