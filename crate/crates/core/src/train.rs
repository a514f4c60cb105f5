//! Stochastic-gradient training of the forward and reverse approximators.
//!
//! Both objectives draw `t` uniformly from the step grid and build
//! `x_t = (1 - t/T) x0 + (t/T) y + B(t) n` with a fresh unit Gaussian `n`.
//! The forward network regresses `x_t - x0`; the reverse network regresses `n`.
//! The two trainings use disjoint random streams, so they are independent of
//! each other and of the order in which they run.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::approx::{Approximator, Mlp, Step};
use crate::bridge::{marginal_with_scale, BridgeSchedule};
use crate::datasets::{PairedDataset, PairedSample};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Per-sample work is split into this many fixed chunks whose gradients are
/// summed in chunk order, so results do not depend on the thread count.
const GRAD_CHUNKS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Regress `x_t - x0`; `t ~ Uniform{1..T}`.
    Forward,
    /// Regress the unit noise; `t ~ Uniform{1..T-1}`.
    Reverse,
}

impl Objective {
    /// Inclusive range of sampled step indices.
    pub fn time_range(self, steps: usize) -> (usize, usize) {
        match self {
            Objective::Forward => (1, steps),
            Objective::Reverse => (1, steps - 1),
        }
    }

    fn stream_name(self) -> &'static str {
        match self {
            Objective::Forward => "train/forward",
            Objective::Reverse => "train/reverse",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Forward => "forward",
            Objective::Reverse => "reverse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossNorm {
    L2Squared,
    L1,
}

impl LossNorm {
    fn value(self, r: &[f64]) -> f64 {
        match self {
            LossNorm::L2Squared => r.iter().map(|v| v * v).sum(),
            LossNorm::L1 => r.iter().map(|v| v.abs()).sum(),
        }
    }

    /// Derivative of the per-sample loss with respect to the residual.
    fn derivative(self, r: f64) -> f64 {
        match self {
            LossNorm::L2Squared => 2.0 * r,
            LossNorm::L1 => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss_norm: LossNorm,
    pub seed: u64,
    /// `T`, the number of diffusion steps.
    pub horizon: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            steps: 2000,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::ADAM,
            loss_norm: LossNorm::L2Squared,
            seed: 0,
            horizon: 1000,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.horizon < 2 {
            return Err(Error::Config("horizon T must be at least 2".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        Ok(())
    }

    /// Flat `key=value` lines, one per field.
    pub fn to_kv(&self) -> String {
        let optimizer = match self.optimizer {
            OptimizerKind::Sgd => "sgd".to_string(),
            OptimizerKind::Adam { beta1, beta2, eps } => {
                format!("adam\nbeta1={beta1}\nbeta2={beta2}\neps={eps}")
            }
        };
        let norm = match self.loss_norm {
            LossNorm::L2Squared => "l2sq",
            LossNorm::L1 => "l1",
        };
        format!(
            "batch_size={}\nsteps={}\nlearning_rate={}\noptimizer={optimizer}\nloss_norm={norm}\nseed={}\nT={}\nlog_every={}\n",
            self.batch_size, self.steps, self.learning_rate, self.seed, self.horizon, self.log_every
        )
    }
}

impl FromStr for TrainConfig {
    type Err = Error;

    /// Parses `key=value` lines; `#` starts a comment and missing keys keep
    /// their defaults.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let (mut adam, mut beta1, mut beta2, mut eps) = (true, 0.9, 0.999, 1e-8);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Config(format!("line {}: bad {what} {value:?}", lineno + 1));
            match key {
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad(key))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad(key))?,
                "learning_rate" | "lr" => cfg.learning_rate = value.parse().map_err(|_| bad(key))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad(key))?,
                "T" | "horizon" => cfg.horizon = value.parse().map_err(|_| bad(key))?,
                "log_every" => cfg.log_every = value.parse().map_err(|_| bad(key))?,
                "beta1" => beta1 = value.parse().map_err(|_| bad(key))?,
                "beta2" => beta2 = value.parse().map_err(|_| bad(key))?,
                "eps" => eps = value.parse().map_err(|_| bad(key))?,
                "optimizer" => {
                    adam = match value {
                        "adam" => true,
                        "sgd" => false,
                        _ => return Err(bad(key)),
                    }
                }
                "loss_norm" => {
                    cfg.loss_norm = match value {
                        "l2sq" | "l2" => LossNorm::L2Squared,
                        "l1" => LossNorm::L1,
                        _ => return Err(bad(key)),
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.optimizer = if adam {
            OptimizerKind::Adam { beta1, beta2, eps }
        } else {
            OptimizerKind::Sgd
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// First and second moment estimates for Adam; unused by SGD.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One optimizer update in place.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    kind: OptimizerKind,
    learning_rate: f64,
) -> Result<()> {
    crate::error::check_dim("optimizer gradient", params.len(), grads.len())?;
    match kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= learning_rate * g;
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            if state.m.len() != params.len() {
                *state = OptimizerState::new(params.len());
            }
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t as i32);
            let bc2 = 1.0 - beta2.powi(state.t as i32);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(state.m.iter_mut())
                .zip(state.v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// Random inputs for one training example.
#[derive(Clone, Debug)]
struct Draw<'a> {
    pair: &'a PairedSample,
    step: Step,
    noise: Vec<f64>,
}

fn draw_for<'a>(
    pair: &'a PairedSample,
    objective: Objective,
    steps: usize,
    stream: &mut Stream,
) -> Draw<'a> {
    let (lo, hi) = objective.time_range(steps);
    let index = stream.int_inclusive(lo, hi);
    let noise = stream.normal_vec(pair.dim());
    Draw {
        pair,
        step: Step::new(index, steps),
        noise,
    }
}

/// Residual for one example: `(x_t - x0) - f(x_t)` or `n - f(x_t)`.
fn residual(
    draw: &Draw<'_>,
    objective: Objective,
    approx: &dyn Approximator,
    schedule: &BridgeSchedule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pair = draw.pair;
    let t = draw.step.frac();
    let b = schedule.b_at(draw.step.index);
    let x_t = marginal_with_scale(&pair.x0, &pair.y, t, b, &draw.noise)?;
    let out = approx.evaluate(&x_t, draw.step, Some(&pair.y))?;
    let r = match objective {
        Objective::Forward => x_t
            .iter()
            .zip(&pair.x0)
            .zip(&out)
            .map(|((x, a), o)| x - a - o)
            .collect(),
        Objective::Reverse => draw.noise.iter().zip(&out).map(|(n, o)| n - o).collect(),
    };
    Ok((x_t, r))
}

/// Batch loss and, for a network, the parameter gradient.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    pub grads: Option<Vec<f64>>,
}

fn check_schedule(schedule: &BridgeSchedule) -> Result<()> {
    if !schedule.noise().is_unit() {
        return Err(Error::Config("training assumes unit noise g = 1".into()));
    }
    Ok(())
}

fn evaluate_batch(
    batch: &[&PairedSample],
    objective: Objective,
    approx: &dyn Approximator,
    net: Option<&Mlp>,
    schedule: &BridgeSchedule,
    norm: LossNorm,
    stream: &mut Stream,
) -> Result<LossEval> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    check_schedule(schedule)?;
    let steps = schedule.steps();
    let draws: Vec<Draw<'_>> = batch
        .iter()
        .map(|p| draw_for(p, objective, steps, stream))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let chunk = draws.len().div_ceil(GRAD_CHUNKS);
    let n_params = net.map_or(0, |m| m.param_count());

    let partials: Vec<Result<(f64, Vec<f64>)>> = draws
        .par_chunks(chunk)
        .map(|part| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; n_params];
            let mut cache = crate::approx::ForwardCache::default();
            for d in part {
                let (x_t, r) = residual(d, objective, approx, schedule)?;
                loss += norm.value(&r);
                if let Some(m) = net {
                    // d loss / d output = -norm'(r) / batch
                    let upstream: Vec<f64> = r.iter().map(|&v| -norm.derivative(v) * scale).collect();
                    let input = m.features(&x_t, d.step, Some(&d.pair.y))?;
                    m.forward(&input, &mut cache)?;
                    m.backward(&input, &cache, &upstream, &mut grad)?;
                }
            }
            Ok((loss, grad))
        })
        .collect();

    let mut loss = 0.0;
    let mut grads = vec![0.0; n_params];
    for part in partials {
        let (l, g) = part?;
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(LossEval {
        loss: loss * scale,
        grads: net.map(|_| grads),
    })
}

/// Forward objective `‖x_t - x0 - f(x_t, t)‖` on a batch, with gradients.
pub fn forward_loss(
    batch: &[&PairedSample],
    net: &Mlp,
    schedule: &BridgeSchedule,
    norm: LossNorm,
    stream: &mut Stream,
) -> Result<(f64, Vec<f64>)> {
    let e = evaluate_batch(batch, Objective::Forward, net, Some(net), schedule, norm, stream)?;
    Ok((e.loss, e.grads.unwrap_or_default()))
}

/// Reverse objective `‖n - f(x_t, t)‖` on a batch, with gradients.
pub fn reverse_loss(
    batch: &[&PairedSample],
    net: &Mlp,
    schedule: &BridgeSchedule,
    norm: LossNorm,
    stream: &mut Stream,
) -> Result<(f64, Vec<f64>)> {
    let e = evaluate_batch(batch, Objective::Reverse, net, Some(net), schedule, norm, stream)?;
    Ok((e.loss, e.grads.unwrap_or_default()))
}

/// Objective value for any approximator, without gradients.
pub fn objective_loss(
    batch: &[&PairedSample],
    objective: Objective,
    approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    norm: LossNorm,
    stream: &mut Stream,
) -> Result<f64> {
    Ok(evaluate_batch(batch, objective, approx, None, schedule, norm, stream)?.loss)
}

/// Mean loss at each step index, estimated from `samples` draws per index.
pub fn loss_by_step(
    dataset: &PairedDataset,
    objective: Objective,
    approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    norm: LossNorm,
    samples: usize,
    stream: &mut Stream,
) -> Result<Vec<(usize, f64)>> {
    check_schedule(schedule)?;
    let steps = schedule.steps();
    let (lo, hi) = objective.time_range(steps);
    let mut out = Vec::with_capacity(hi - lo + 1);
    for index in lo..=hi {
        let mut total = 0.0;
        for _ in 0..samples {
            let pair = &dataset.samples[stream.int_inclusive(0, dataset.len() - 1)];
            let draw = Draw {
                pair,
                step: Step::new(index, steps),
                noise: stream.normal_vec(pair.dim()),
            };
            let (_, r) = residual(&draw, objective, approx, schedule)?;
            total += norm.value(&r);
        }
        out.push((index, total / samples as f64));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,wall_ms\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.step, crate::eval::fmt_sig(p.loss), p.wall_ms));
        }
        s
    }

    pub fn first(&self) -> Option<f64> {
        self.points.first().map(|p| p.loss)
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.loss)
    }
}

/// Runs `config.steps` optimizer steps on `net` in place.
///
/// Minibatches are drawn with replacement from the objective's own stream, so
/// the result depends only on `(config, dataset, initial params)`. The loss is
/// recorded every `log_every` steps and at the last step.
pub fn train(
    dataset: &PairedDataset,
    net: &mut Mlp,
    config: &TrainConfig,
    objective: Objective,
) -> Result<LossCurve> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    crate::error::check_dim("training data", net.dim(), dataset.dim)?;
    let schedule = BridgeSchedule::new(config.horizon)?;
    let mut stream = Stream::named(config.seed, objective.stream_name());
    let mut state = OptimizerState::new(net.param_count());
    let mut curve = LossCurve::default();
    let started = Instant::now();

    for step in 0..config.steps {
        let batch: Vec<&PairedSample> = (0..config.batch_size)
            .map(|_| &dataset.samples[stream.int_inclusive(0, dataset.len() - 1)])
            .collect();
        let eval = evaluate_batch(
            &batch,
            objective,
            &*net,
            Some(&*net),
            &schedule,
            config.loss_norm,
            &mut stream,
        )?;
        let grads = eval.grads.unwrap_or_default();
        if !eval.loss.is_finite() {
            let gnorm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            let pnorm = net.params().iter().map(|p| p * p).sum::<f64>().sqrt();
            return Err(Error::NonFinite {
                step,
                detail: format!("{objective} loss {}; |grad| {gnorm:e}, |params| {pnorm:e}", eval.loss),
            });
        }
        if eval.loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged {
                step,
                loss: eval.loss,
            });
        }
        if step % config.log_every == 0 || step + 1 == config.steps {
            curve.points.push(LossPoint {
                step,
                loss: eval.loss,
                wall_ms: started.elapsed().as_millis() as u64,
            });
        }
        optimizer_step(net.params_mut(), &grads, &mut state, config.optimizer, config.learning_rate)?;
    }
    Ok(curve)
}
