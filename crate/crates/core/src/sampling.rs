//! Samplers producing an estimate of `x0` from `y`.
//!
//! * [`sample_dual`]: the deterministic dual-approximator sampler. The only
//!   random draw is the unit Gaussian used at `t = T`; every later noise
//!   estimate comes from the reverse approximator.
//! * [`sample_dual_centred`]: the same idea written as the continuous-time
//!   recursion with centred states `U = x - y`, started from an explicit
//!   `x_{T-1}`.
//! * [`sample_sde`]: Euler-Maruyama on the reverse bridge SDE, fresh noise
//!   every step.
//! * [`sample_pf_ode`]: Euler on the probability-flow ODE (score halved, no
//!   noise).
//!
//! All four stop at index 1 and return `x_1 - eps(x_1, 1)`. Unit noise
//! (`g ≡ 1`) is assumed throughout.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::approx::{Approximator, Step};
use crate::binio::Writer;
use crate::bridge::{BridgeSchedule, BridgeState, TIME_EPS};
use crate::error::{Error, Result};
use crate::eval::{rows_for_cell, MetricsReport};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    Dual,
    DualCentred,
    Sde,
    PfOde,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [
        SamplerKind::Dual,
        SamplerKind::DualCentred,
        SamplerKind::Sde,
        SamplerKind::PfOde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Dual => "dual",
            SamplerKind::DualCentred => "dual-centred",
            SamplerKind::Sde => "sde",
            SamplerKind::PfOde => "pf-ode",
        }
    }

    /// Smallest admissible `T`.
    pub fn min_steps(self) -> usize {
        match self {
            SamplerKind::Dual | SamplerKind::DualCentred => 3,
            SamplerKind::Sde | SamplerKind::PfOde => 2,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sampler {s:?}; expected one of dual, dual-centred, sde, pf-ode"
                ))
            })
    }
}

/// Knobs shared by all samplers.
#[derive(Clone, Debug, Default)]
pub struct SampleOptions {
    /// Keep every visited state.
    pub record_trajectory: bool,
    /// Use this vector instead of drawing the `t = T` Gaussian (dual samplers).
    pub initial_z: Option<Vec<f64>>,
    /// Replace every SDE noise draw with zero.
    pub zero_noise: bool,
    /// Stop at this index and return `x_k - eps(x_k, k)`; defaults to 1.
    pub stop_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerRun {
    pub kind: SamplerKind,
    pub y: Vec<f64>,
    pub x0_hat: Vec<f64>,
    /// State at the stopping index (normally `x_1`).
    pub x_stop: Vec<f64>,
    /// Visited states from `x_T = y` down to the stopping index, when recorded.
    pub trajectory: Option<Vec<BridgeState>>,
    /// The single Gaussian drawn at `t = T` (dual samplers; empty otherwise).
    pub initial_z: Vec<f64>,
    /// Per-step draws of the SDE sampler, in step order.
    pub step_noise: Vec<Vec<f64>>,
    pub steps_used: usize,
}

/// Weights of the dual update on `(x_t, y, x̂0, U_{t+1}, U_t)`.
pub fn dual_weights(t: usize) -> [f64; 5] {
    let t = t as f64;
    [
        1.0 - 1.0 / t,
        1.0 / (t - 1.0),
        -1.0 / (t * (t - 1.0)),
        -1.0,
        t / (t - 1.0),
    ]
}

/// Weights of the centred-state recursion on `(x_t, y, U_{t+1}, U_t)`, with
/// `Δt / t` replaced by `1 / t` on the uniform grid.
pub fn centred_weights(t: usize) -> [f64; 4] {
    let r = 1.0 / t as f64;
    [1.0 - r, r, -1.0, 1.0 + r]
}

fn check_steps(kind: SamplerKind, schedule: &BridgeSchedule, dim: usize, y: &[f64]) -> Result<()> {
    if schedule.steps() < kind.min_steps() {
        return Err(Error::Config(format!(
            "{kind} sampler needs T >= {}, got {}",
            kind.min_steps(),
            schedule.steps()
        )));
    }
    if !schedule.noise().is_unit() {
        return Err(Error::Config("samplers assume unit noise g = 1".into()));
    }
    crate::error::check_dim("sampler y", dim, y.len())
}

fn stop_index(opts: &SampleOptions, steps: usize) -> Result<usize> {
    let k = opts.stop_at.unwrap_or(1);
    if k == 0 || k > steps {
        return Err(Error::StepRange { index: k, steps });
    }
    Ok(k)
}

fn check_finite(x: &[f64], step: usize, kind: SamplerKind) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            detail: format!("{kind} sampler state left the finite range"),
        })
    }
}

/// `x_t - eps(x_t, t)`.
fn estimate_x0(eps: &dyn Approximator, x: &[f64], step: Step, y: &[f64]) -> Result<Vec<f64>> {
    let e = eps.evaluate(x, step, Some(y))?;
    Ok(x.iter().zip(&e).map(|(a, b)| a - b).collect())
}

/// Centred reconstruction `(1 - k/T)(x̂0 - y) + B(k) ẑ`.
fn centred(x0_hat: &[f64], y: &[f64], z: &[f64], k: usize, schedule: &BridgeSchedule) -> Vec<f64> {
    let w = 1.0 - schedule.time(k);
    let b = schedule.b_at(k);
    x0_hat
        .iter()
        .zip(y)
        .zip(z)
        .map(|((a, c), n)| w * (a - c) + b * n)
        .collect()
}

struct Recorder {
    on: bool,
    states: Vec<BridgeState>,
}

impl Recorder {
    fn new(on: bool) -> Self {
        Self {
            on,
            states: Vec::new(),
        }
    }

    fn push(&mut self, x: &[f64], t_index: usize) {
        if self.on {
            self.states.push(BridgeState {
                x: x.to_vec(),
                t_index,
            });
        }
    }

    fn finish(self) -> Option<Vec<BridgeState>> {
        self.on.then_some(self.states)
    }
}

fn initial_draw(opts: &SampleOptions, dim: usize, seed: u64) -> Result<Vec<f64>> {
    match &opts.initial_z {
        Some(z) => {
            crate::error::check_dim("initial z", dim, z.len())?;
            Ok(z.clone())
        }
        None => Ok(Stream::named(seed, "sample").normal_vec(dim)),
    }
}

/// Deterministic dual-approximator sampler.
pub fn sample_dual(
    y: &[f64],
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
) -> Result<SamplerRun> {
    sample_dual_with(y, eps, z_approx, schedule, seed, &SampleOptions::default())
}

pub fn sample_dual_with(
    y: &[f64],
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
    opts: &SampleOptions,
) -> Result<SamplerRun> {
    let kind = SamplerKind::Dual;
    check_steps(kind, schedule, eps.dim(), y)?;
    let steps = schedule.steps();
    let stop = stop_index(opts, steps)?;
    let initial_z = initial_draw(opts, y.len(), seed)?;
    let mut rec = Recorder::new(opts.record_trajectory);
    let mut x = y.to_vec();
    rec.push(&x, steps);

    let mut t = steps;
    loop {
        let step = Step::new(t, steps);
        let x0_hat = estimate_x0(eps, &x, step, y)?;
        if t == stop {
            return Ok(SamplerRun {
                kind,
                y: y.to_vec(),
                x0_hat,
                x_stop: x,
                trajectory: rec.finish(),
                initial_z,
                step_noise: Vec::new(),
                steps_used: steps - stop,
            });
        }
        let z_hat = if t == steps {
            initial_z.clone()
        } else {
            z_approx.evaluate(&x, step, Some(y))?
        };
        // U_{t+1} = x̂_t - y and U_t = x̂_{t-1} - y
        let u_next = centred(&x0_hat, y, &z_hat, t, schedule);
        let u_cur = centred(&x0_hat, y, &z_hat, t - 1, schedule);
        let [wx, wy, w0, wn, wc] = dual_weights(t);
        for i in 0..x.len() {
            x[i] = wx * x[i] + wy * y[i] + w0 * x0_hat[i] + wn * u_next[i] + wc * u_cur[i];
        }
        t -= 1;
        check_finite(&x, t, kind)?;
        rec.push(&x, t);
    }
}

/// Centred-state recursion started from `x_{T-1} = y - eps(y, T)/T - z/√T`.
pub fn sample_dual_centred(
    y: &[f64],
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
) -> Result<SamplerRun> {
    sample_dual_centred_with(y, eps, z_approx, schedule, seed, &SampleOptions::default())
}

pub fn sample_dual_centred_with(
    y: &[f64],
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
    opts: &SampleOptions,
) -> Result<SamplerRun> {
    let kind = SamplerKind::DualCentred;
    check_steps(kind, schedule, eps.dim(), y)?;
    let steps = schedule.steps();
    let stop = stop_index(opts, steps)?;
    let initial_z = initial_draw(opts, y.len(), seed)?;
    let mut rec = Recorder::new(opts.record_trajectory);
    rec.push(y, steps);

    let finish = |x: Vec<f64>, x0_hat: Vec<f64>, rec: Recorder, t: usize| SamplerRun {
        kind,
        y: y.to_vec(),
        x0_hat,
        x_stop: x,
        trajectory: rec.finish(),
        initial_z: initial_z.clone(),
        step_noise: Vec::new(),
        steps_used: steps - t,
    };

    let top = Step::new(steps, steps);
    let e_top = eps.evaluate(y, top, Some(y))?;
    if stop == steps {
        let x0_hat = y.iter().zip(&e_top).map(|(a, b)| a - b).collect();
        return Ok(finish(y.to_vec(), x0_hat, rec, steps));
    }
    let inv_t = 1.0 / steps as f64;
    let inv_sqrt = inv_t.sqrt();
    let mut x: Vec<f64> = y
        .iter()
        .zip(&e_top)
        .zip(&initial_z)
        .map(|((a, e), z)| a - inv_t * e - inv_sqrt * z)
        .collect();
    check_finite(&x, steps - 1, kind)?;
    rec.push(&x, steps - 1);

    let mut t = steps - 1;
    loop {
        let step = Step::new(t, steps);
        let x0_hat = estimate_x0(eps, &x, step, y)?;
        if t == stop {
            return Ok(finish(x, x0_hat, rec, t));
        }
        let z_hat = z_approx.evaluate(&x, step, Some(y))?;
        let u_next = centred(&x0_hat, y, &z_hat, t + 1, schedule);
        let u_cur = centred(&x0_hat, y, &z_hat, t, schedule);
        let [wx, wy, wn, wc] = centred_weights(t);
        for i in 0..x.len() {
            x[i] = wx * x[i] + wy * y[i] + wn * u_next[i] + wc * u_cur[i];
        }
        t -= 1;
        check_finite(&x, t, kind)?;
        rec.push(&x, t);
    }
}

/// Shared Euler loop of the two baselines. `score_weight` is 1 for the SDE and
/// 1/2 for the probability-flow ODE; `noise` supplies the Brownian draw.
fn reverse_euler(
    kind: SamplerKind,
    y: &[f64],
    eps: &dyn Approximator,
    schedule: &BridgeSchedule,
    opts: &SampleOptions,
    score_weight: f64,
    mut noise: impl FnMut(usize) -> Option<Vec<f64>>,
) -> Result<SamplerRun> {
    check_steps(kind, schedule, eps.dim(), y)?;
    let steps = schedule.steps();
    let stop = stop_index(opts, steps)?;
    let dt = schedule.dt();
    let sqrt_dt = dt.sqrt();
    let mut rec = Recorder::new(opts.record_trajectory);
    let mut x = y.to_vec();
    rec.push(&x, steps);
    let mut step_noise = Vec::new();

    let mut t = steps;
    loop {
        let step = Step::new(t, steps);
        let x0_hat = estimate_x0(eps, &x, step, y)?;
        if t == stop {
            return Ok(SamplerRun {
                kind,
                y: y.to_vec(),
                x0_hat,
                x_stop: x,
                trajectory: rec.finish(),
                initial_z: Vec::new(),
                step_noise,
                steps_used: steps - stop,
            });
        }
        let tc = schedule.time(t).clamp(TIME_EPS, 1.0 - TIME_EPS);
        let one_minus = 1.0 - tc;
        let g = tc * one_minus;
        let z = noise(t);
        for i in 0..x.len() {
            let score = -(x[i] - one_minus * x0_hat[i] - tc * y[i]) / g;
            let drift = (x[i] - y[i]) / one_minus + score_weight * score;
            let w = z.as_ref().map_or(0.0, |z| z[i]);
            x[i] += drift * dt - sqrt_dt * w;
        }
        if let Some(z) = z {
            step_noise.push(z);
        }
        t -= 1;
        check_finite(&x, t, kind)?;
        rec.push(&x, t);
    }
}

/// Stochastic reverse-SDE baseline; every step consumes a fresh draw.
pub fn sample_sde(
    y: &[f64],
    eps: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
) -> Result<SamplerRun> {
    sample_sde_with(y, eps, schedule, seed, &SampleOptions::default())
}

pub fn sample_sde_with(
    y: &[f64],
    eps: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
    opts: &SampleOptions,
) -> Result<SamplerRun> {
    let mut stream = Stream::named(seed, "sample");
    let dim = y.len();
    let zero = opts.zero_noise;
    reverse_euler(SamplerKind::Sde, y, eps, schedule, opts, 1.0, |_| {
        Some(if zero { vec![0.0; dim] } else { stream.normal_vec(dim) })
    })
}

/// Deterministic probability-flow ODE baseline.
pub fn sample_pf_ode(y: &[f64], eps: &dyn Approximator, schedule: &BridgeSchedule) -> Result<SamplerRun> {
    sample_pf_ode_with(y, eps, schedule, &SampleOptions::default())
}

pub fn sample_pf_ode_with(
    y: &[f64],
    eps: &dyn Approximator,
    schedule: &BridgeSchedule,
    opts: &SampleOptions,
) -> Result<SamplerRun> {
    reverse_euler(SamplerKind::PfOde, y, eps, schedule, opts, 0.5, |_| None)
}

/// Dispatches on `kind`. The reverse approximator is ignored by the baselines.
pub fn run_sampler(
    kind: SamplerKind,
    y: &[f64],
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    seed: u64,
    opts: &SampleOptions,
) -> Result<SamplerRun> {
    match kind {
        SamplerKind::Dual => sample_dual_with(y, eps, z_approx, schedule, seed, opts),
        SamplerKind::DualCentred => sample_dual_centred_with(y, eps, z_approx, schedule, seed, opts),
        SamplerKind::Sde => sample_sde_with(y, eps, schedule, seed, opts),
        SamplerKind::PfOde => sample_pf_ode_with(y, eps, schedule, opts),
    }
}

/// Seed for one `(input, trial)` cell under a master seed.
///
/// Independent of the sampler kind, so different samplers see the same seeds.
pub fn cell_seed(master: u64, input: usize, trial: usize) -> u64 {
    Stream::named(master, "sample/cells")
        .fork("cell", ((input as u64) << 20) ^ trial as u64)
        .next_u64()
}

/// Outputs of `trials` runs of `kind` on each input: `result[trial][input]`.
#[allow(clippy::too_many_arguments)]
pub fn run_trials(
    kind: SamplerKind,
    ys: &[Vec<f64>],
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    schedule: &BridgeSchedule,
    trials: usize,
    master_seed: u64,
    opts: &SampleOptions,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let cells: Vec<(usize, usize)> = (0..trials)
        .flat_map(|k| (0..ys.len()).map(move |i| (k, i)))
        .collect();
    let outputs: Vec<Result<Vec<f64>>> = cells
        .par_iter()
        .map(|&(k, i)| {
            run_sampler(kind, &ys[i], eps, z_approx, schedule, cell_seed(master_seed, i, k), opts)
                .map(|r| r.x0_hat)
        })
        .collect();
    let mut out = vec![Vec::with_capacity(ys.len()); trials];
    for ((k, _), o) in cells.into_iter().zip(outputs) {
        out[k].push(o?);
    }
    Ok(out)
}

/// How a step count `s` is realised in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// Fresh uniform grid with `T = s`.
    Rediscretize,
    /// Run on the full `T` grid and read `x̂0` in the `s`-th loop iteration,
    /// at index `T - s + 1`; `s = T` is the full run.
    EarlyStop,
}

/// Inputs, ground truth, and metric options for a sweep.
pub struct SweepInputs<'a> {
    pub ys: &'a [Vec<f64>],
    pub ground_truth: &'a [Vec<f64>],
    /// Image side for SSIM; `None` reports SSIM as NaN.
    pub side: Option<usize>,
    pub peak: f64,
}

/// Runs `kind` at each step count and scores the outputs.
#[allow(clippy::too_many_arguments)]
pub fn step_count_sweep(
    kind: SamplerKind,
    inputs: &SweepInputs<'_>,
    eps: &dyn Approximator,
    z_approx: &dyn Approximator,
    horizon: usize,
    step_list: &[usize],
    trials: usize,
    master_seed: u64,
    mode: SweepMode,
) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for &s in step_list {
        if s < 3 {
            return Err(Error::Config(format!("step count {s} below 3")));
        }
        let (schedule, opts) = match mode {
            SweepMode::Rediscretize => (BridgeSchedule::new(s)?, SampleOptions::default()),
            SweepMode::EarlyStop => {
                if s > horizon {
                    return Err(Error::Config(format!("step count {s} exceeds T = {horizon}")));
                }
                // s iterations of the t = T..1 loop end at index T - s + 1
                let stop = horizon - s + 1;
                (
                    BridgeSchedule::new(horizon)?,
                    SampleOptions {
                        stop_at: Some(stop),
                        ..SampleOptions::default()
                    },
                )
            }
        };
        let outputs = run_trials(kind, inputs.ys, eps, z_approx, &schedule, trials, master_seed, &opts)?;
        report.rows.extend(rows_for_cell(
            kind.name(),
            s,
            &outputs,
            inputs.ground_truth,
            inputs.side,
            inputs.peak,
        )?);
    }
    report.sort();
    Ok(report)
}

/// Writes the visited states as one tensor block (`u64` count, then `f64`s,
/// states in visiting order) plus a `key=value` sidecar at `<path>.txt`.
pub fn write_trajectory(path: impl AsRef<Path>, run: &SamplerRun, seed: u64, steps: usize) -> Result<()> {
    let path = path.as_ref();
    let states = run
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::Config("run was not recorded with a trajectory".into()))?;
    let flat: Vec<f64> = states.iter().flat_map(|s| s.x.iter().copied()).collect();
    let mut w = Writer::new();
    w.tensor(&flat);
    std::fs::write(path, w.finish()).map_err(|e| Error::io(path, e))?;

    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    let side = std::path::PathBuf::from(side);
    let first = states.first().map_or(0, |s| s.t_index);
    let last = states.last().map_or(0, |s| s.t_index);
    let mut f = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    writeln!(
        f,
        "sampler={}\nseed={seed}\nT={steps}\ndim={}\nstates={}\nfirst_index={first}\nlast_index={last}",
        run.kind,
        run.y.len(),
        states.len()
    )
    .map_err(|e| Error::io(&side, e))?;
    Ok(())
}
