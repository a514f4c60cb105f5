//! `dabridge` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dabridge::approx::{
    analytic_forward_oracle, analytic_reverse_oracle, load_checkpoint, save_checkpoint, Activation,
    Approximator, Mlp, MlpConfig, TimeEmbedding,
};
use dabridge::datasets::{
    gen_blur_pairs, gen_gaussian_pairs, gen_twomoons_pairs, load_dataset, save_dataset,
};
use dabridge::eval::{psnr_capped, rows_for_cell, ssim, MetricsReport};
use dabridge::experiment::{init_thread_pool, run_repro, write_manifest, Seeds};
use dabridge::sampling::{
    cell_seed, run_sampler, run_trials, step_count_sweep, SampleOptions, SweepInputs, SweepMode,
};
use dabridge::train::{train, Objective, TrainConfig};
use dabridge::{BridgeSchedule, ExperimentConfig, Model, PairedDataset, PairedSample, SamplerKind};

#[derive(Parser)]
#[command(name = "dabridge", version, about = "Dual-approximator Brownian bridge toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired dataset.
    GenData(GenDataArgs),
    /// Train the forward and/or reverse approximator.
    Train(TrainArgs),
    /// Run a sampler over held-out inputs.
    Sample(SampleArgs),
    /// Score saved estimates against ground truth.
    Eval(EvalArgs),
    /// Run one sampler at several step counts.
    Sweep(SweepArgs),
    /// Full pipeline: data, training, and the step/trial tables.
    ReproTable(ReproArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Blur,
    Gaussian,
    Twomoons,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Blur => "blur",
            Task::Gaussian => "gaussian",
            Task::Twomoons => "twomoons",
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// File stem under `data/`; defaults to the task name.
    #[arg(long)]
    name: Option<String>,
    /// Image side (blur).
    #[arg(long, default_value_t = 8)]
    side: usize,
    /// Box-blur radius (blur).
    #[arg(long, default_value_t = 1)]
    radius: usize,
    /// Dimension (gaussian).
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    sd: f64,
    /// y = x0 + offset (gaussian).
    #[arg(long, default_value_t = 2.0)]
    offset: f64,
    /// Jitter of the arcs (twomoons).
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Forward,
    Reverse,
    Both,
}

#[derive(Args)]
struct NetArgs {
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    hidden: Vec<usize>,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    /// `none`, `scalar`, or `sin<n>`.
    #[arg(long, default_value = "scalar")]
    time_embedding: TimeEmbedding,
    /// Feed `y` to both networks.
    #[arg(long)]
    conditional: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    which: Which,
    /// `key=value` training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    net: NetArgs,
}

#[derive(Args)]
struct ModelArgs {
    /// Use the closed-form per-pair oracles instead of checkpoints.
    #[arg(long, conflicts_with_all = ["forward", "reverse"])]
    oracle: bool,
    #[arg(long)]
    forward: Option<PathBuf>,
    #[arg(long)]
    reverse: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    models: ModelArgs,
    #[arg(long, default_value = "dual")]
    sampler: SamplerKind,
    #[arg(long = "T", default_value_t = 1000)]
    horizon: usize,
    /// Read the estimate after this many loop iterations instead of running to the end.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Use only the first N pairs.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth pairs.
    #[arg(long)]
    data: PathBuf,
    /// Estimate files (one per trial) as written by `sample`.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long, default_value = "unknown")]
    sampler: String,
    #[arg(long, default_value_t = 0)]
    steps: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Rediscretize,
    EarlyStop,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    forward: PathBuf,
    #[arg(long)]
    reverse: PathBuf,
    #[arg(long, default_value = "dual")]
    sampler: SamplerKind,
    #[arg(long = "steps-list", value_delimiter = ',', default_value = "3,10,200")]
    step_list: Vec<usize>,
    #[arg(long = "T", default_value_t = 1000)]
    horizon: usize,
    #[arg(long, value_enum, default_value = "rediscretize")]
    mode: Mode,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReproArgs {
    /// Experiment config (`key=value`, e.g. a previous `run.txt`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long = "steps-list", value_delimiter = ',')]
    step_list: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// A semantically invalid invocation that clap cannot catch.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_thread_pool()?;
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ReproTable(a) => cmd_repro_table(a),
    }
}

fn mkdirs(out: &Path, subs: &[&str]) -> anyhow::Result<()> {
    for s in subs {
        let p = out.join(s);
        std::fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

/// Manifest for a single command at `out/runs/<command>/run.txt`.
fn manifest(out: &Path, command: &str, body: &str) -> anyhow::Result<PathBuf> {
    let dir = out.join("runs").join(command);
    mkdirs(&dir, &[""])?;
    let path = dir.join("run.txt");
    write_manifest(&path, command, body)?;
    Ok(path)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(path: &Path) -> anyhow::Result<PairedDataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn take(ds: &PairedDataset, limit: Option<usize>) -> &[PairedSample] {
    let n = limit.unwrap_or(ds.len()).min(ds.len());
    &ds.samples[..n]
}

/// Side of a square image of `dim` pixels, when SSIM applies.
fn image_side(dim: usize) -> Option<usize> {
    let s = (dim as f64).sqrt().round() as usize;
    (s * s == dim && s >= 4).then_some(s)
}

fn cmd_gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    let seed = Seeds::derive(a.seed).data;
    let ds = match a.task {
        Task::Blur => {
            if !(4..=32).contains(&a.side) {
                return Err(usage(format!("--side {} outside [4, 32]", a.side)));
            }
            gen_blur_pairs(a.n, a.side, a.radius, seed)?
        }
        Task::Gaussian => gen_gaussian_pairs(a.n, a.dim, a.mean, a.sd, a.offset, seed)?,
        Task::Twomoons => gen_twomoons_pairs(a.n, a.noise, seed)?,
    };
    mkdirs(&a.out, &["data"])?;
    let name = a.name.unwrap_or_else(|| a.task.name().to_string());
    let path = a.out.join("data").join(format!("{name}.dabt"));
    save_dataset(&path, &ds)?;

    let mut body = String::new();
    writeln!(body, "task={}\nn={}\nseed={}\nseed.data={seed}", a.task.name(), a.n, a.seed)?;
    match a.task {
        Task::Blur => writeln!(body, "side={}\nradius={}", a.side, a.radius)?,
        Task::Gaussian => writeln!(body, "dim={}\nmean={}\nsd={}\noffset={}", a.dim, a.mean, a.sd, a.offset)?,
        Task::Twomoons => writeln!(body, "noise={}", a.noise)?,
    }
    writeln!(body, "dim_out={}\noutput={}", ds.dim, path.display())?;
    manifest(&a.out, "gen-data", &body)?;
    println!("wrote {} pairs of dim {} to {}", ds.len(), ds.dim, path.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let mut tc = match &a.config {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .parse::<TrainConfig>()
            .map_err(|e| usage(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.steps {
        tc.steps = v;
    }
    if let Some(v) = a.learning_rate {
        tc.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = a.horizon {
        tc.horizon = v;
    }
    let seeds = Seeds::derive(a.seed);
    tc.seed = seeds.train;
    tc.validate().map_err(|e| usage(e.to_string()))?;

    mkdirs(&a.out, &["ckpt", "runs/train"])?;
    let objectives: &[Objective] = match a.which {
        Which::Forward => &[Objective::Forward],
        Which::Reverse => &[Objective::Reverse],
        Which::Both => &[Objective::Forward, Objective::Reverse],
    };
    let mut body = String::new();
    writeln!(body, "data={}\nseed={}", a.data.display(), a.seed)?;
    writeln!(
        body,
        "hidden={}\nactivation={}\ntime_embedding={}\nconditional={}",
        a.net.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        a.net.activation,
        a.net.time_embedding,
        a.net.conditional
    )?;
    for line in tc.to_kv().lines().filter(|l| !l.starts_with("seed=")) {
        writeln!(body, "{line}")?;
    }
    writeln!(body, "seed.train={}", tc.seed)?;
    for &obj in objectives {
        let init = match obj {
            Objective::Forward => seeds.init_forward,
            Objective::Reverse => seeds.init_reverse,
        };
        let cfg = MlpConfig::for_data(
            data.dim,
            &a.net.hidden,
            a.net.activation,
            a.net.time_embedding,
            a.net.conditional,
        )
        .seed(init)
        .zero_final(obj == Objective::Forward);
        let mut net = Mlp::new(cfg).map_err(|e| usage(e.to_string()))?;
        let curve = train(&data, &mut net, &tc, obj)?;
        let ckpt = a.out.join("ckpt").join(format!("{obj}.dabr"));
        save_checkpoint(&ckpt, &Model::Mlp(net))?;
        write(&a.out.join("runs/train").join(format!("{obj}_loss.csv")), &curve.to_csv())?;
        writeln!(body, "seed.init_{obj}={init}\ncheckpoint.{obj}={}", ckpt.display())?;
        println!(
            "{obj}: loss {} -> {} over {} steps, checkpoint {}",
            curve.first().map_or("n/a".into(), dabridge::eval::fmt_sig),
            curve.last().map_or("n/a".into(), dabridge::eval::fmt_sig),
            tc.steps,
            ckpt.display()
        );
    }
    manifest(&a.out, "train", &body)?;
    Ok(())
}

fn load_model(path: &Path, data_dim: usize) -> anyhow::Result<Model> {
    let m = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if m.dim() != data_dim {
        bail!(
            "dimension mismatch: checkpoint {} has dim {}, data has dim {}",
            path.display(),
            m.dim(),
            data_dim
        );
    }
    Ok(m)
}

/// Loaded networks, or `None` for per-pair oracles.
fn resolve_models(m: &ModelArgs, kind: SamplerKind, dim: usize) -> anyhow::Result<Option<(Model, Option<Model>)>> {
    if m.oracle {
        return Ok(None);
    }
    let forward = m
        .forward
        .as_ref()
        .ok_or_else(|| usage("need --forward CKPT or --oracle"))?;
    let forward = load_model(forward, dim)?;
    let needs_reverse = matches!(kind, SamplerKind::Dual | SamplerKind::DualCentred);
    let reverse = match (&m.reverse, needs_reverse) {
        (Some(p), _) => Some(load_model(p, dim)?),
        (None, true) => return Err(usage(format!("the {kind} sampler needs --reverse CKPT"))),
        (None, false) => None,
    };
    Ok(Some((forward, reverse)))
}

fn cmd_sample(a: SampleArgs) -> anyhow::Result<()> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    if a.horizon < a.sampler.min_steps() {
        return Err(usage(format!("{} sampler needs --T >= {}", a.sampler, a.sampler.min_steps())));
    }
    if let Some(s) = a.steps {
        if s == 0 || s > a.horizon {
            return Err(usage(format!("--steps {s} outside [1, T = {}]", a.horizon)));
        }
    }
    let data = load_data(&a.data)?;
    let pairs = take(&data, a.limit);
    let models = resolve_models(&a.models, a.sampler, data.dim)?;
    let schedule = BridgeSchedule::new(a.horizon)?;
    let opts = SampleOptions {
        stop_at: a.steps.map(|s| a.horizon - s + 1),
        ..SampleOptions::default()
    };
    let master = Seeds::derive(a.seed).sample;
    let ys: Vec<Vec<f64>> = pairs.iter().map(|p| p.y.clone()).collect();
    let gt: Vec<Vec<f64>> = pairs.iter().map(|p| p.x0.clone()).collect();

    let outputs: Vec<Vec<Vec<f64>>> = match &models {
        Some((f, r)) => {
            // baselines never touch the reverse approximator
            let r: &dyn Approximator = r.as_ref().map_or(f as &dyn Approximator, |r| r);
            run_trials(a.sampler, &ys, f, r, &schedule, a.trials, master, &opts)?
        }
        None => {
            let mut out = vec![Vec::with_capacity(pairs.len()); a.trials];
            for (i, p) in pairs.iter().enumerate() {
                let f = analytic_forward_oracle(p);
                let r = analytic_reverse_oracle(p)?;
                for (k, o) in out.iter_mut().enumerate() {
                    let run = run_sampler(a.sampler, &p.y, &f, &r, &schedule, cell_seed(master, i, k), &opts)?;
                    o.push(run.x0_hat);
                }
            }
            out
        }
    };

    mkdirs(&a.out, &["runs/sample", "tables"])?;
    let side = image_side(data.dim);
    let steps_col = a.steps.unwrap_or(a.horizon);
    let mut per_input = String::from("input,trial,psnr_db,ssim\n");
    for (k, outs) in outputs.iter().enumerate() {
        let est: Vec<PairedSample> = outs
            .iter()
            .zip(&ys)
            .map(|(o, y)| PairedSample::new(o.clone(), y.clone()))
            .collect::<dabridge::Result<_>>()?;
        let ds = PairedDataset::new(est, "estimates", a.seed)?;
        save_dataset(a.out.join("runs/sample").join(format!("trial{k}.dabt")), &ds)?;
        for (i, (o, g)) in outs.iter().zip(&gt).enumerate() {
            let p = psnr_capped(o, g, 1.0)?;
            let q = match side {
                Some(s) => ssim(o, g, s, 1.0)?,
                None => f64::NAN,
            };
            writeln!(per_input, "{i},{k},{},{}", dabridge::eval::fmt_sig(p), dabridge::eval::fmt_sig(q))?;
        }
    }
    write(&a.out.join("runs/sample/per_input.csv"), &per_input)?;
    let report = MetricsReport {
        rows: rows_for_cell(a.sampler.name(), steps_col, &outputs, &gt, side, 1.0)?,
    };
    let csv = report.to_csv();
    write(&a.out.join("tables/sample.csv"), &csv)?;

    let mut body = String::new();
    writeln!(
        body,
        "data={}\nsampler={}\nT={}\nsteps={}\ntrials={}\nlimit={}\nseed={}\nseed.sample={master}",
        a.data.display(),
        a.sampler,
        a.horizon,
        steps_col,
        a.trials,
        pairs.len(),
        a.seed
    )?;
    match (&a.models.forward, &a.models.reverse) {
        _ if a.models.oracle => writeln!(body, "models=oracle")?,
        (Some(f), r) => {
            writeln!(body, "forward={}", f.display())?;
            if let Some(r) = r {
                writeln!(body, "reverse={}", r.display())?;
            }
        }
        _ => {}
    }
    manifest(&a.out, "sample", &body)?;
    print!("{csv}");
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let mut outputs = Vec::new();
    for p in &a.pred {
        let est = load_data(p)?;
        if est.dim != data.dim {
            bail!("dimension mismatch: {} has dim {}, data has dim {}", p.display(), est.dim, data.dim);
        }
        if est.len() > data.len() {
            bail!("{} has {} rows but the data has only {}", p.display(), est.len(), data.len());
        }
        outputs.push(est.samples.into_iter().map(|s| s.x0).collect::<Vec<_>>());
    }
    let n = outputs[0].len();
    if outputs.iter().any(|o| o.len() != n) {
        bail!("estimate files disagree on the number of rows");
    }
    let gt: Vec<Vec<f64>> = data.samples[..n].iter().map(|s| s.x0.clone()).collect();
    let report = MetricsReport {
        rows: rows_for_cell(&a.sampler, a.steps, &outputs, &gt, image_side(data.dim), 1.0)?,
    };
    mkdirs(&a.out, &["tables"])?;
    let csv = report.to_csv();
    write(&a.out.join("tables/eval.csv"), &csv)?;
    let preds: Vec<String> = a.pred.iter().map(|p| p.display().to_string()).collect();
    let body = format!(
        "data={}\npred={}\nsampler={}\nsteps={}\n",
        a.data.display(),
        preds.join(","),
        a.sampler,
        a.steps
    );
    manifest(&a.out, "eval", &body)?;
    print!("{csv}");
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    for &s in &a.step_list {
        if s < 3 || s > a.horizon {
            return Err(usage(format!("step count {s} outside [3, T = {}]", a.horizon)));
        }
    }
    let data = load_data(&a.data)?;
    let pairs = take(&data, a.limit);
    let f = load_model(&a.forward, data.dim)?;
    let r = load_model(&a.reverse, data.dim)?;
    let ys: Vec<Vec<f64>> = pairs.iter().map(|p| p.y.clone()).collect();
    let gt: Vec<Vec<f64>> = pairs.iter().map(|p| p.x0.clone()).collect();
    let inputs = SweepInputs {
        ys: &ys,
        ground_truth: &gt,
        side: image_side(data.dim),
        peak: 1.0,
    };
    let (mode, mode_name) = match a.mode {
        Mode::Rediscretize => (SweepMode::Rediscretize, "rediscretize"),
        Mode::EarlyStop => (SweepMode::EarlyStop, "early-stop"),
    };
    let master = Seeds::derive(a.seed).sample;
    let report = step_count_sweep(a.sampler, &inputs, &f, &r, a.horizon, &a.step_list, a.trials, master, mode)?;
    mkdirs(&a.out, &["tables"])?;
    let csv = report.to_csv();
    write(&a.out.join("tables/sweep.csv"), &csv)?;
    let steps: Vec<String> = a.step_list.iter().map(|s| s.to_string()).collect();
    let body = format!(
        "data={}\nforward={}\nreverse={}\nsampler={}\nsteps_list={}\nT={}\nmode={mode_name}\ntrials={}\nlimit={}\nseed={}\nseed.sample={master}\n",
        a.data.display(),
        a.forward.display(),
        a.reverse.display(),
        a.sampler,
        steps.join(","),
        a.horizon,
        a.trials,
        pairs.len(),
        a.seed
    );
    manifest(&a.out, "sweep", &body)?;
    print!("{csv}");
    Ok(())
}

fn cmd_repro_table(a: ReproArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))?
            .parse::<ExperimentConfig>()
            .map_err(|e| usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.horizon {
        cfg.train.horizon = v;
        if a.step_list.is_none() {
            cfg.step_list = [3, 10, 200, v].into_iter().filter(|&s| s <= v).collect();
            cfg.step_list.dedup();
        }
    }
    if let Some(v) = a.train_steps {
        cfg.train.steps = v;
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.n_train {
        cfg.n_train = v;
    }
    if let Some(v) = a.n_test {
        cfg.n_test = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = a.step_list {
        cfg.step_list = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let out = run_repro(&cfg, &a.out).map_err(|e| anyhow!(e))?;
    println!("step table:  {}", out.step_table.display());
    println!("trial table: {}", out.trial_table.display());
    println!("manifest:    {}", out.manifest.display());
    print!("{}", std::fs::read_to_string(&out.trial_table)?);
    Ok(())
}
