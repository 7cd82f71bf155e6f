use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idode::dataset::{load_trajectories, save_trajectories, sample_uniform, Exclusion, ParamGrid, TrajectorySet};
use idode::embed::{select_delay_autocorr, EmbeddingSpec, EstimatorRegistry};
use idode::eval::{r_squared, run_experiment, Backend, ExperimentConfig};
use idode::infer::{infer_batch, write_results_jsonl, InferConfig, InferenceResult, InitStrategy, SearchSpace};
use idode::integrate::{integrate_points, BatchOutcome, Method};
use idode::io::{atomic_write, write_json, write_sidecar};
use idode::net::{init_model, load_model, save_model, Activation, OptimizerConfig};
use idode::oracle::{affine_least_squares, dt_convergence_sweep, log_log_slope, write_sweep_csv, Targets};
use idode::systems::{system_by_name, SystemOptions, SystemSpec};
use idode::train::{train, EpochUnits, TrainConfig};
use idode::{Error, Result};
use serde::Serialize;

/// Learn velocity fields of parameterized dynamical systems and infer the
/// parameters of new trajectories.
#[derive(Debug, Parser)]
#[command(name = "idode", version)]
struct Cli {
    /// Worker threads for integration and inference.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a system over a parameter grid and write a trajectory set.
    Generate(GenerateArgs),
    /// Delay-embed a trajectory set, or estimate the embedding dimension.
    Embed(EmbedArgs),
    /// Fit a network to the finite-difference velocities of a trajectory set.
    Train(TrainArgs),
    /// Infer parameters of every trajectory in a set through a trained model.
    Infer(InferArgs),
    /// Run a full experiment described by a JSON config.
    Eval(EvalArgs),
    /// Closed-form estimation error as the sampling step shrinks.
    SweepDt(SweepArgs),
    /// Closed-form least-squares parameters for every trajectory in a set.
    OracleFit(OracleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk4,
    Dopri5,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Catalog name: lorenz, lorenz96, lvpp, double-pendulum.
    system: String,
    /// State dimension of systems with a variable size.
    #[arg(long)]
    dim: Option<usize>,
    /// Lattice spacing on every parameter axis.
    #[arg(long, conflicts_with_all = ["grid", "sample"])]
    step: Option<f64>,
    /// JSON parameter grid.
    #[arg(long, conflicts_with = "sample")]
    grid: Option<PathBuf>,
    /// Draw this many parameters uniformly from the box instead of a lattice.
    #[arg(long)]
    sample: Option<usize>,
    /// Seed for --sample.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop lattice points in a checkerboard pattern.
    #[arg(long)]
    checkerboard: bool,
    #[arg(long, default_value_t = 100.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Initial state, comma separated; defaults to the system's standard start.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "dopri5")]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Channel to embed; all channels when omitted.
    #[arg(long)]
    channel: Option<usize>,
    /// Delay in samples; chosen by autocorrelation with --estimate when omitted.
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Print Cao and Kennel minimum dimensions for the first trajectory and exit.
    #[arg(long)]
    estimate: bool,
    /// Largest dimension tried by --estimate.
    #[arg(long, default_value_t = 10)]
    max_dim: usize,
    #[arg(long, required_unless_present = "estimate")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitsArg {
    Steps,
    Passes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Softplus,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128,128,128")]
    net: Vec<usize>,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    /// JSON training config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    units: Option<UnitsArg>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for weight initialization.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// Train on raw rather than z-scored columns.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    out_model: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// JSON inference config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `midpoint`, `best`, or comma-separated starting parameters.
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    /// Trajectory set whose parameters are the candidates for `--init best`.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// State dimension of systems with a variable size.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Use closed-form least squares instead of a network.
    #[arg(long)]
    oracle: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    system: String,
    #[arg(long)]
    dim: Option<usize>,
    /// Generating parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100.0)]
    t_end: f64,
    /// Decreasing sampling steps, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.02,0.01,0.005")]
    dts: Vec<f64>,
    /// Use the true velocities instead of finite differences.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn arg_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::InvalidArgument(_) | Error::UnknownName { .. } | Error::InvalidDimension(_) => 2,
        Error::Format { .. } | Error::Json(_) => 4,
        _ => 3,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        kind: idode::FormatError::Header(e.to_string()),
    })
}

fn system_for(name: &str, dim: Option<usize>) -> Result<SystemSpec> {
    system_by_name(name, &SystemOptions { dim })
}

/// The catalog system behind a set; the state width fixes variable sizes.
fn system_of(set: &TrajectorySet, dim: Option<usize>) -> Result<SystemSpec> {
    let dim = dim.or(if set.embedding.is_none() { Some(set.width) } else { None });
    system_for(&set.system, dim)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(arg_err(format!("--{name} must be positive, got {v}")))
    }
}

fn report_failures(outcome: &BatchOutcome) {
    for (i, alpha, e) in &outcome.failures {
        log::warn!("trajectory {i} at {alpha:?} failed: {e}");
    }
}

#[derive(Serialize)]
struct GenerateRecord<'a> {
    system: &'a str,
    dim: Option<usize>,
    params: &'a [Vec<f64>],
    x0: &'a [f64],
    t_end: f64,
    dt: f64,
    method: Method,
}

fn cmd_generate(a: &GenerateArgs, jobs: usize) -> Result<()> {
    positive("dt", a.dt)?;
    positive("t-end", a.t_end)?;
    if a.t_end < a.dt {
        return Err(arg_err("--t-end must be at least --dt"));
    }
    let sys = system_for(&a.system, a.dim)?;
    let x0 = a.x0.clone().unwrap_or_else(|| sys.default_x0());
    if x0.len() != sys.state_dim() {
        return Err(arg_err(format!("--x0 has {} values, `{}` needs {}", x0.len(), a.system, sys.state_dim())));
    }
    let method = match a.method {
        MethodArg::Rk4 => "rk4".parse()?,
        MethodArg::Dopri5 => Method::default(),
    };
    let points = if let Some(n) = a.sample {
        if n == 0 {
            return Err(arg_err("--sample must be ≥ 1"));
        }
        sample_uniform(sys.param_box(), n, a.seed)
    } else {
        let grid = match (&a.grid, a.step) {
            (Some(p), _) => read_json::<ParamGrid>(p)?,
            (None, Some(step)) => {
                positive("step", step)?;
                ParamGrid::lattice(sys.param_box(), step)?
            }
            (None, None) => return Err(arg_err("one of --step, --grid or --sample is required")),
        };
        let grid = if a.checkerboard { grid.with_exclusion(Exclusion::Checkerboard) } else { grid };
        if grid.dim() != sys.param_dim() {
            return Err(arg_err(format!("grid has {} axes, `{}` has {} parameters", grid.dim(), a.system, sys.param_dim())));
        }
        grid.points()?
    };
    let started = Instant::now();
    let outcome = integrate_points(sys.as_ref(), &points, &x0, a.t_end, a.dt, &method, jobs)?;
    report_failures(&outcome);
    if let Some((_, _, e)) = outcome.failures.into_iter().next() {
        return Err(e);
    }
    save_trajectories(&outcome.set, &a.out)?;
    let record = GenerateRecord { system: &a.system, dim: a.dim, params: &points, x0: &x0, t_end: a.t_end, dt: a.dt, method };
    write_sidecar(&a.out, &record, &[])?;
    let size = std::fs::metadata(&a.out).map(|m| m.len()).unwrap_or(0);
    println!(
        "wrote {} trajectories ({} rows, {size} bytes) to {} in {:.2?}",
        outcome.set.len(),
        outcome.set.total_rows(),
        a.out.display(),
        started.elapsed()
    );
    Ok(())
}

fn cmd_embed(a: &EmbedArgs) -> Result<()> {
    let set = load_trajectories(&a.input)?;
    if a.estimate {
        let channel = a.channel.unwrap_or(0);
        if channel >= set.width {
            return Err(arg_err(format!("channel {channel} out of range for width {}", set.width)));
        }
        let first = set.trajectories.first().ok_or_else(|| arg_err("trajectory set is empty"))?;
        let series = first.channel(channel);
        let tau = match a.tau {
            Some(t) => t,
            None => select_delay_autocorr(&series, (series.len() / 2).saturating_sub(1).clamp(1, 2000))?,
        };
        let (per, combined) = EstimatorRegistry::default().estimate_all(&series, tau, a.max_dim)?;
        let parts: Vec<String> = per.iter().map(|(n, e)| format!("{n}: {}{}", e.dim, if e.saturated { "+" } else { "" })).collect();
        println!("{}", parts.join(", "));
        println!("tau: {tau}, combined: {combined}");
        return Ok(());
    }
    let out = a.out.as_ref().ok_or_else(|| arg_err("--out is required"))?;
    let dim = a.dim.ok_or_else(|| arg_err("--dim is required"))?;
    let tau = a.tau.ok_or_else(|| arg_err("--tau is required"))?;
    if dim == 0 || tau == 0 {
        return Err(arg_err("--dim and --tau must be ≥ 1"));
    }
    if set.embedding.is_some() {
        return Err(arg_err("input set is already embedded"));
    }
    let embedded = if dim == 1 && a.channel.is_none() {
        set
    } else {
        let channels = match a.channel {
            Some(c) => vec![c],
            None => (0..set.width).collect(),
        };
        set.embed(&EmbeddingSpec::new(tau, dim, channels)?)?
    };
    save_trajectories(&embedded, out)?;
    #[derive(Serialize)]
    struct Record {
        channel: Option<usize>,
        tau: usize,
        dim: usize,
    }
    write_sidecar(out, &Record { channel: a.channel, tau, dim }, &[&a.input])?;
    println!(
        "wrote {} trajectories of width {} ({} rows) to {}",
        embedded.len(),
        embedded.width,
        embedded.total_rows(),
        out.display()
    );
    Ok(())
}

fn optimizer_from(base: OptimizerConfig, kind: Option<OptimizerArg>, lr: Option<f64>, momentum: Option<f64>) -> OptimizerConfig {
    let lr = lr.unwrap_or(base.lr());
    let mut opt = match (kind, base) {
        (Some(OptimizerArg::Adam), OptimizerConfig::Adam { .. }) | (None, OptimizerConfig::Adam { .. }) => base,
        (Some(OptimizerArg::Adam), _) => OptimizerConfig::adam(lr),
        (Some(OptimizerArg::Sgd), OptimizerConfig::SgdMomentum { .. }) | (None, OptimizerConfig::SgdMomentum { .. }) => base,
        (Some(OptimizerArg::Sgd), _) => OptimizerConfig::sgd(lr, 0.99),
    };
    match &mut opt {
        OptimizerConfig::Adam { lr: l, .. } => *l = lr,
        OptimizerConfig::SgdMomentum { lr: l, momentum: m } => {
            *l = lr;
            if let Some(v) = momentum {
                *m = v;
            }
        }
    }
    opt
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    layers: &'a [usize],
    activation: Activation,
    init_seed: u64,
    normalize: bool,
    train: &'a TrainConfig,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    cfg.optimizer = optimizer_from(cfg.optimizer, a.optimizer, a.lr, a.momentum);
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(u) = a.units {
        cfg.units = match u {
            UnitsArg::Steps => EpochUnits::Steps,
            UnitsArg::Passes => EpochUnits::Passes,
        };
    }
    cfg.validate()?;
    if a.net.is_empty() || a.net.contains(&0) {
        return Err(arg_err("--net needs positive layer widths"));
    }
    let set = load_trajectories(&a.data)?;
    let data = idode::dataset::build_supervised(&set, !a.no_normalize)?;
    let activation = match a.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Softplus => Activation::Softplus,
    };
    let mut dims = vec![data.input_dim()];
    dims.extend(&a.net);
    dims.push(data.output_dim());
    let model = init_model(&dims, activation, data.state_dim, a.init_seed)?;
    drop(set);
    let (model, mut report) = train(model, &data, &cfg)?;
    save_model(&model, &a.out_model)?;
    let record = TrainRecord { layers: &dims, activation, init_seed: a.init_seed, normalize: !a.no_normalize, train: &cfg };
    write_sidecar(&a.out_model, &record, &[&a.data])?;
    report.model_path = Some(a.out_model.display().to_string());
    let report_path = a.out_model.with_extension("report.json");
    write_json(&report_path, &report)?;
    write_sidecar(&report_path, &record, &[&a.out_model])?;
    let curve_path = a.out_model.with_extension("curve.csv");
    report.write_curve_csv(&curve_path)?;
    write_sidecar(&curve_path, &record, &[&a.out_model])?;
    println!(
        "trained {} steps on {} pairs in {:.2?}; held-out loss {}",
        report.steps,
        report.train_rows,
        report.wall_time,
        report.final_heldout_loss.map(|l| format!("{l:.4e}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

fn print_scores(labels: &[String], results: &[Result<InferenceResult>]) {
    let ok: Vec<&InferenceResult> = results.iter().filter_map(|r| r.as_ref().ok()).filter(|r| r.true_alpha.is_some()).collect();
    if ok.len() < 2 {
        return;
    }
    for (j, label) in labels.iter().enumerate() {
        let t: Vec<f64> = ok.iter().map(|r| r.true_alpha.as_ref().expect("filtered")[j]).collect();
        let p: Vec<f64> = ok.iter().map(|r| r.alpha_hat[j]).collect();
        match r_squared(&t, &p) {
            Ok(r) => println!("r2 {label}: {r:.6}"),
            Err(e) => println!("r2 {label}: {e}"),
        }
    }
}

fn cmd_infer(a: &InferArgs, jobs: usize) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<InferConfig>(p)?,
        None => InferConfig::default(),
    };
    cfg.optimizer = optimizer_from(cfg.optimizer, a.optimizer, a.lr, a.momentum);
    if let Some(v) = a.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = Some(v);
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(init) = &a.init {
        cfg.init = match init.as_str() {
            "midpoint" => InitStrategy::BoxMidpoint,
            "best" => InitStrategy::BestTrainingParam,
            list => InitStrategy::Explicit(
                list.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| arg_err(format!("bad --init value `{v}`"))))
                    .collect::<Result<_>>()?,
            ),
        };
    }
    cfg.validate()?;
    let model = load_model(&a.model)?;
    let set = load_trajectories(&a.data)?;
    let sys = system_of(&set, a.dim)?;
    let mut space = SearchSpace::new(sys.param_box().clone());
    if let Some(p) = &a.candidates {
        space.candidates = load_trajectories(p)?.trajectories.into_iter().map(|t| t.params).collect();
    }
    if cfg.init == InitStrategy::BestTrainingParam && space.candidates.is_empty() {
        return Err(arg_err("--init best needs --candidates"));
    }
    let started = Instant::now();
    let results = infer_batch(&model, &set.trajectories, &space, &cfg, jobs);
    for (i, r) in results.iter().enumerate() {
        if let Err(e) = r {
            log::warn!("trajectory {i}: {e}");
        }
    }
    if !results.is_empty() && results.iter().all(|r| r.is_err()) {
        let first = results.into_iter().next().expect("non-empty");
        return first.map(|_| ());
    }
    write_results_jsonl(&a.out, &results)?;
    let mut inputs: Vec<&Path> = vec![&a.model, &a.data];
    if let Some(p) = &a.candidates {
        inputs.push(p);
    }
    write_sidecar(&a.out, &cfg, &inputs)?;
    println!("inferred {} trajectories in {:.2?}", results.len(), started.elapsed());
    print_scores(&set.param_labels, &results);
    Ok(())
}

fn cmd_eval(a: &EvalArgs, jobs: usize) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&a.config)?;
    if let Some(d) = &a.out_dir {
        cfg.output_dir = Some(d.clone());
    }
    if a.oracle {
        cfg.backend = Backend::Oracle;
    }
    let started = Instant::now();
    let report = run_experiment(&cfg, jobs)?;
    for (label, r) in report.param_labels.iter().zip(&report.r_squared) {
        match r {
            Some(r) => println!("r2 {label}: {r:.6}"),
            None => println!("r2 {label}: undefined"),
        }
    }
    println!(
        "{} test trajectories, {} failures, {} outliers in {:.2?}",
        report.scatter.len() + report.failures.len(),
        report.failures.len(),
        report.outliers.len(),
        started.elapsed()
    );
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, jobs: usize) -> Result<()> {
    let sys = system_for(&a.system, a.dim)?;
    if a.alpha.len() != sys.param_dim() {
        return Err(arg_err(format!("--alpha has {} values, `{}` has {} parameters", a.alpha.len(), a.system, sys.param_dim())));
    }
    if a.dts.iter().any(|&d| !(d > 0.0)) {
        return Err(arg_err("--dts must be positive"));
    }
    positive("t-end", a.t_end)?;
    let x0 = a.x0.clone().unwrap_or_else(|| sys.default_x0());
    let targets = if a.exact { Targets::Exact } else { Targets::FiniteDifference };
    let points = dt_convergence_sweep(sys.as_ref(), &a.alpha, &x0, a.t_end, &a.dts, targets, jobs)?;
    write_sweep_csv(&a.out, "dt", &points)?;
    #[derive(Serialize)]
    struct Record<'a> {
        system: &'a str,
        alpha: &'a [f64],
        x0: &'a [f64],
        t_end: f64,
        dts: &'a [f64],
        targets: Targets,
    }
    write_sidecar(&a.out, &Record { system: &a.system, alpha: &a.alpha, x0: &x0, t_end: a.t_end, dts: &a.dts, targets }, &[])?;
    for p in &points {
        println!("dt {}: error {:.6e}", p.value, p.error());
    }
    if let Some(s) = log_log_slope(&points) {
        println!("slope: {s:.3}");
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let set = load_trajectories(&a.data)?;
    if set.embedding.is_some() {
        return Err(arg_err("the oracle needs full-state trajectories"));
    }
    let sys = system_of(&set, a.dim)?;
    let mut out = String::new();
    let mut results = Vec::new();
    for t in &set.trajectories {
        let (alpha, ne) = affine_least_squares(sys.as_ref(), t)?;
        out.push_str(&serde_json::to_string(&serde_json::json!({
            "alpha_hat": alpha,
            "true_alpha": t.params,
            "condition": ne.condition,
            "samples": ne.samples,
        }))?);
        out.push('\n');
        results.push(Ok(InferenceResult {
            init_used: alpha.clone(),
            alpha_hat: alpha,
            true_alpha: Some(t.params.clone()),
            loss_trace: Vec::new(),
            iters_used: 0,
            termination: idode::infer::Termination::MaxIters,
        }));
    }
    atomic_write(&a.out, out.as_bytes())?;
    write_sidecar(&a.out, &serde_json::json!({ "system": set.system }), &[&a.data])?;
    println!("fitted {} trajectories", set.len());
    print_scores(&set.param_labels, &results);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(arg_err("--jobs must be ≥ 1"));
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.jobs),
        Command::Embed(a) => cmd_embed(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a, cli.jobs),
        Command::Eval(a) => cmd_eval(a, cli.jobs),
        Command::SweepDt(a) => cmd_sweep(a, cli.jobs),
        Command::OracleFit(a) => cmd_oracle(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
