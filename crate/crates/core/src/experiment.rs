//! End-to-end toy experiment: blur→sharp pairs, both approximators trained
//! from scratch, then every sampler run over held-out inputs at several step
//! counts.
//!
//! All randomness comes from one master seed split into the named substreams
//! `data`, `init`, `train`, and `sample`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::approx::{save_checkpoint, Activation, Mlp, MlpConfig, Model, TimeEmbedding};
use crate::datasets::{gen_blur_pairs, save_dataset, PairedDataset};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::rng::Stream;
use crate::sampling::{step_count_sweep, SamplerKind, SweepInputs, SweepMode};
use crate::train::{train, LossCurve, Objective, TrainConfig};

pub const THREADS_ENV: &str = "DABRIDGE_THREADS";

/// Caps the global rayon pool at `$DABRIDGE_THREADS` when set. Calling it
/// again after the pool exists is a no-op.
pub fn init_thread_pool() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
    if n == 0 {
        return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
    }
    // an already-initialised pool is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Seeds derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub init_forward: u64,
    pub init_reverse: u64,
    pub train: u64,
    pub sample: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        let init = Stream::named(master, "init");
        Self {
            data: Stream::named(master, "data").next_u64(),
            init_forward: init.fork("forward", 0).next_u64(),
            init_reverse: init.fork("reverse", 0).next_u64(),
            train: Stream::named(master, "train").next_u64(),
            sample: Stream::named(master, "sample").next_u64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub side: usize,
    pub blur_radius: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_embedding: TimeEmbedding,
    pub conditional: bool,
    /// Optimiser settings shared by both approximators; `horizon` is `T`.
    pub train: TrainConfig,
    pub step_list: Vec<usize>,
    pub trials: usize,
    pub samplers: Vec<SamplerKind>,
    pub sweep_mode: SweepMode,
    /// Step count of the dual rows in the trial table; the other samplers
    /// there always run the full `T` steps.
    pub trial_steps: usize,
}

impl Default for ExperimentConfig {
    /// The reference configuration.
    fn default() -> Self {
        let horizon = 4000;
        Self {
            seed: 0,
            side: 8,
            blur_radius: 1,
            n_train: 2048,
            n_test: 32,
            hidden: vec![128, 128],
            activation: Activation::Tanh,
            time_embedding: TimeEmbedding::Scalar,
            conditional: false,
            train: TrainConfig {
                batch_size: 64,
                steps: 3000,
                learning_rate: 1e-3,
                horizon,
                log_every: 100,
                ..TrainConfig::default()
            },
            step_list: vec![3, 10, 200, horizon],
            trials: 5,
            samplers: vec![SamplerKind::Dual, SamplerKind::Sde, SamplerKind::PfOde],
            sweep_mode: SweepMode::EarlyStop,
            trial_steps: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn horizon(&self) -> usize {
        self.train.horizon
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }

    pub fn mlp_config(&self, init_seed: u64) -> MlpConfig {
        MlpConfig::for_data(
            self.dim(),
            &self.hidden,
            self.activation,
            self.time_embedding,
            self.conditional,
        )
        .seed(init_seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("n_train and n_test must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.samplers.is_empty() || self.step_list.is_empty() {
            return Err(Error::Config("need at least one sampler and one step count".into()));
        }
        if !self.step_list.contains(&self.trial_steps) || !self.step_list.contains(&self.horizon()) {
            return Err(Error::Config(format!(
                "step_list must contain trial_steps = {} and T = {}",
                self.trial_steps,
                self.horizon()
            )));
        }
        for &s in &self.step_list {
            if s < 3 || s > self.horizon() {
                return Err(Error::Config(format!(
                    "step count {s} outside [3, T = {}]",
                    self.horizon()
                )));
            }
        }
        Ok(())
    }

    /// `key=value` lines covering every resolved setting, including derived seeds.
    pub fn to_kv(&self) -> String {
        let seeds = self.seeds();
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "side={}", self.side);
        let _ = writeln!(s, "blur_radius={}", self.blur_radius);
        let _ = writeln!(s, "n_train={}", self.n_train);
        let _ = writeln!(s, "n_test={}", self.n_test);
        let _ = writeln!(s, "hidden={}", join(&self.hidden));
        let _ = writeln!(s, "activation={}", self.activation);
        let _ = writeln!(s, "time_embedding={}", self.time_embedding);
        let _ = writeln!(s, "conditional={}", self.conditional);
        // the training seed is derived from the master seed
        for line in self.train.to_kv().lines().filter(|l| !l.starts_with("seed=")) {
            s.push_str(line);
            s.push('\n');
        }
        let _ = writeln!(s, "step_list={}", join(&self.step_list));
        let _ = writeln!(s, "trials={}", self.trials);
        let names: Vec<&str> = self.samplers.iter().map(|k| k.name()).collect();
        let _ = writeln!(s, "samplers={}", names.join(","));
        let mode = match self.sweep_mode {
            SweepMode::Rediscretize => "rediscretize",
            SweepMode::EarlyStop => "early-stop",
        };
        let _ = writeln!(s, "sweep_mode={mode}");
        let _ = writeln!(s, "trial_steps={}", self.trial_steps);
        let _ = writeln!(s, "seed.data={}", seeds.data);
        let _ = writeln!(s, "seed.init_forward={}", seeds.init_forward);
        let _ = writeln!(s, "seed.init_reverse={}", seeds.init_reverse);
        let _ = writeln!(s, "seed.train={}", seeds.train);
        let _ = writeln!(s, "seed.sample={}", seeds.sample);
        s
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    /// Parses the output of [`ExperimentConfig::to_kv`]. Unknown training keys
    /// are handed to [`TrainConfig`]; derived `seed.*` lines and the manifest's
    /// `command` line are ignored.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut train_lines = String::new();
        let mut step_list = None;
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |what: &str| Error::Config(format!("bad {what} value {v:?}"));
            let list = |v: &str| -> Result<Vec<usize>> {
                v.split(',')
                    .map(|x| x.trim().parse().map_err(|_| bad(k)))
                    .collect()
            };
            match k {
                "seed" => cfg.seed = v.parse().map_err(|_| bad(k))?,
                "side" => cfg.side = v.parse().map_err(|_| bad(k))?,
                "blur_radius" => cfg.blur_radius = v.parse().map_err(|_| bad(k))?,
                "n_train" => cfg.n_train = v.parse().map_err(|_| bad(k))?,
                "n_test" => cfg.n_test = v.parse().map_err(|_| bad(k))?,
                "hidden" => cfg.hidden = list(v)?,
                "activation" => cfg.activation = v.parse()?,
                "time_embedding" => cfg.time_embedding = v.parse()?,
                "conditional" => cfg.conditional = v.parse().map_err(|_| bad(k))?,
                "step_list" => step_list = Some(list(v)?),
                "trial_steps" => cfg.trial_steps = v.parse().map_err(|_| bad(k))?,
                "trials" => cfg.trials = v.parse().map_err(|_| bad(k))?,
                "samplers" => {
                    cfg.samplers = v
                        .split(',')
                        .map(|x| x.trim().parse())
                        .collect::<Result<Vec<_>>>()?
                }
                "sweep_mode" => {
                    cfg.sweep_mode = match v {
                        "rediscretize" => SweepMode::Rediscretize,
                        "early-stop" => SweepMode::EarlyStop,
                        _ => return Err(bad(k)),
                    }
                }
                _ if k.starts_with("seed.") || k == "command" => {}
                _ => {
                    train_lines.push_str(line);
                    train_lines.push('\n');
                }
            }
        }
        cfg.train = train_lines.parse()?;
        let horizon = cfg.horizon();
        cfg.step_list = step_list.unwrap_or_else(|| vec![3, 10, 200.min(horizon), horizon]);
        Ok(cfg)
    }
}

/// Sharp/blurred pairs split into training and held-out parts.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(PairedDataset, PairedDataset)> {
    let all = gen_blur_pairs(
        cfg.n_train + cfg.n_test,
        cfg.side,
        cfg.blur_radius,
        cfg.seeds().data,
    )?;
    all.split(cfg.n_train)
}

#[derive(Clone, Debug)]
pub struct TrainedPair {
    pub forward: Mlp,
    pub reverse: Mlp,
    pub forward_curve: LossCurve,
    pub reverse_curve: LossCurve,
}

/// Trains both approximators from their own init and training streams.
pub fn train_pair(cfg: &ExperimentConfig, data: &PairedDataset) -> Result<TrainedPair> {
    let seeds = cfg.seeds();
    let tc = TrainConfig {
        seed: seeds.train,
        ..cfg.train.clone()
    };
    // a zero final layer starts the forward net at x̂0 = x_t
    let mut forward = Mlp::new(cfg.mlp_config(seeds.init_forward).zero_final(true))?;
    let forward_curve = train(data, &mut forward, &tc, Objective::Forward)?;
    let mut reverse = Mlp::new(cfg.mlp_config(seeds.init_reverse))?;
    let reverse_curve = train(data, &mut reverse, &tc, Objective::Reverse)?;
    Ok(TrainedPair {
        forward,
        reverse,
        forward_curve,
        reverse_curve,
    })
}

/// Every configured sampler at every step count, scored against the
/// held-out ground truth.
pub fn sweep_all(cfg: &ExperimentConfig, pair: &TrainedPair, test: &PairedDataset) -> Result<MetricsReport> {
    let ys: Vec<Vec<f64>> = test.samples.iter().map(|s| s.y.clone()).collect();
    let gt: Vec<Vec<f64>> = test.samples.iter().map(|s| s.x0.clone()).collect();
    let inputs = SweepInputs {
        ys: &ys,
        ground_truth: &gt,
        side: Some(cfg.side),
        peak: 1.0,
    };
    let mut report = MetricsReport::default();
    for &kind in &cfg.samplers {
        let part = step_count_sweep(
            kind,
            &inputs,
            &pair.forward,
            &pair.reverse,
            cfg.horizon(),
            &cfg.step_list,
            cfg.trials,
            cfg.seeds().sample,
            cfg.sweep_mode,
        )?;
        report.rows.extend(part.rows);
    }
    report.sort();
    Ok(report)
}

/// Paths written by [`run_repro`], relative to nothing (absolute or as given).
#[derive(Clone, Debug)]
pub struct ReproOutputs {
    pub step_table: PathBuf,
    pub trial_table: PathBuf,
    pub manifest: PathBuf,
    pub report: MetricsReport,
}

pub const STEP_TABLE: &str = "tables/steps.csv";
pub const TRIAL_TABLE: &str = "tables/trials.csv";

/// Writes `key=value` manifest text to `path`.
pub fn write_manifest(path: impl AsRef<Path>, command: &str, body: &str) -> Result<()> {
    let path = path.as_ref();
    let text = format!("command={command}\n{body}");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Full pipeline under `out`: `data/`, `ckpt/`, `runs/`, `tables/`, `run.txt`.
///
/// The step table holds every `(sampler, steps, trial)` row. The trial table
/// takes from it the dual rows at `trial_steps` and the other samplers' rows
/// at `T`.
pub fn run_repro(cfg: &ExperimentConfig, out: &Path) -> Result<ReproOutputs> {
    cfg.validate()?;
    for sub in ["data", "ckpt", "runs", "tables"] {
        ensure_dir(&out.join(sub))?;
    }
    let (train_ds, test_ds) = prepare_data(cfg)?;
    save_dataset(out.join("data/train.dabt"), &train_ds)?;
    save_dataset(out.join("data/test.dabt"), &test_ds)?;

    let pair = train_pair(cfg, &train_ds)?;
    save_checkpoint(out.join("ckpt/forward.dabr"), &Model::Mlp(pair.forward.clone()))?;
    save_checkpoint(out.join("ckpt/reverse.dabr"), &Model::Mlp(pair.reverse.clone()))?;
    write_file(&out.join("runs/forward_loss.csv"), &pair.forward_curve.to_csv())?;
    write_file(&out.join("runs/reverse_loss.csv"), &pair.reverse_curve.to_csv())?;

    let report = sweep_all(cfg, &pair, &test_ds)?;
    let step_table = out.join(STEP_TABLE);
    write_file(&step_table, &report.to_csv())?;
    let trials = MetricsReport {
        rows: report
            .rows
            .iter()
            .filter(|r| r.steps == trial_steps_for(cfg, &r.sampler))
            .cloned()
            .collect(),
    };
    let trial_table = out.join(TRIAL_TABLE);
    write_file(&trial_table, &trials.to_csv())?;

    let manifest = out.join("run.txt");
    write_manifest(&manifest, "repro-table", &cfg.to_kv())?;
    Ok(ReproOutputs {
        step_table,
        trial_table,
        manifest,
        report,
    })
}

/// Step count a sampler is reported at in the trial table.
pub fn trial_steps_for(cfg: &ExperimentConfig, sampler: &str) -> usize {
    if sampler == SamplerKind::Dual.name() {
        cfg.trial_steps
    } else {
        cfg.horizon()
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
