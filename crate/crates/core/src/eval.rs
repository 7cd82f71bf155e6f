//! End-to-end experiments and the R² metric.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_supervised_with, sample_uniform, save_trajectories, ParamGrid, SupervisedOptions, TrajectorySet,
};
use crate::embed::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::infer::{infer_batch, write_results_jsonl, InferConfig, InferenceResult, InitStrategy, SearchSpace};
use crate::integrate::{integrate_points, Method, Trajectory};
use crate::io::{atomic_write, write_json, write_sidecar};
use crate::net::{init_model, load_model, save_model, Activation, OptimizerConfig};
use crate::oracle::affine_least_squares;
use crate::systems::{system_by_name, DynamicalSystem, SystemOptions, SystemSpec};
use crate::train::{train, TrainConfig, TrainReport};

/// Estimates further than this fraction of the box width are listed as outliers.
pub const OUTLIER_FRACTION: f64 = 0.25;

/// `1 − SS_res / SS_tot`.
pub fn r_squared(true_vals: &[f64], predicted: &[f64]) -> Result<f64> {
    if true_vals.is_empty() || true_vals.len() != predicted.len() {
        return Err(Error::shape(format!("{} true values and {} predictions", true_vals.len(), predicted.len())));
    }
    let mean = true_vals.iter().sum::<f64>() / true_vals.len() as f64;
    let ss_tot: f64 = true_vals.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedRSquared);
    }
    let ss_res: f64 = true_vals.iter().zip(predicted).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mean_abs_error(true_vals: &[f64], predicted: &[f64]) -> f64 {
    true_vals.iter().zip(predicted).map(|(t, p)| (t - p).abs()).sum::<f64>() / true_vals.len().max(1) as f64
}

/// What the model sees as its state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    #[default]
    FullState,
    /// The full state stacked with `copies − 1` lagged copies.
    FullStateSpacedDelay { tau: usize, copies: usize },
    /// Delay vector of a single channel.
    ScalarDelay { channel: usize, tau: usize, dim: usize },
}

impl Representation {
    pub fn embedding(&self, state_dim: usize) -> Result<Option<EmbeddingSpec>> {
        Ok(match *self {
            Representation::FullState => None,
            Representation::FullStateSpacedDelay { tau, copies } => {
                Some(EmbeddingSpec::new(tau, copies, (0..state_dim).collect())?)
            }
            Representation::ScalarDelay { channel, tau, dim } => Some(EmbeddingSpec::scalar(channel, tau, dim)?),
        })
    }

    /// Model state width for a system with `state_dim` components.
    pub fn width(&self, state_dim: usize) -> usize {
        match *self {
            Representation::FullState => state_dim,
            Representation::FullStateSpacedDelay { copies, .. } => state_dim * copies,
            Representation::ScalarDelay { dim, .. } => dim,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Representation::FullState => "full_state".into(),
            Representation::FullStateSpacedDelay { tau, copies } => format!("spaced_delay(tau={tau},copies={copies})"),
            Representation::ScalarDelay { channel, tau, dim } => format!("scalar_delay(channel={channel},tau={tau},dim={dim})"),
        }
    }
}

/// How test parameters are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Train a network (or load one) and descend through it.
    #[default]
    Neural,
    /// Closed-form least squares on each test trajectory.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub system: String,
    pub system_options: SystemOptions,
    pub representation: Representation,
    /// Lattice spacing of the training grid, used when `grid` is absent.
    pub grid_step: f64,
    pub grid: Option<ParamGrid>,
    pub x0: Option<Vec<f64>>,
    pub t_end: f64,
    pub dt: f64,
    pub method: Method,
    pub test_count: usize,
    pub test_seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub model_seed: u64,
    pub normalize: bool,
    pub train: TrainConfig,
    pub infer: InferConfig,
    pub backend: Backend,
    /// Skip training and use this checkpoint.
    pub model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk("lorenz")
    }
}

impl ExperimentConfig {
    /// Desk-scale recipe for a catalog system.
    pub fn desk(system: &str) -> Self {
        let mut cfg = Self {
            system: system.to_string(),
            system_options: SystemOptions::default(),
            representation: Representation::FullState,
            grid_step: 0.5,
            grid: None,
            x0: None,
            t_end: 100.0,
            dt: 0.01,
            method: Method::default(),
            test_count: 50,
            test_seed: 1,
            hidden: vec![128, 128, 128],
            activation: Activation::Relu,
            model_seed: 0,
            normalize: true,
            train: TrainConfig { optimizer: OptimizerConfig::adam(1e-3), epochs: 5000, ..TrainConfig::default() },
            infer: InferConfig {
                optimizer: OptimizerConfig::adam(1e-2),
                max_iters: 1000,
                ..InferConfig::default()
            },
            backend: Backend::Neural,
            model: None,
            output_dir: None,
        };
        match system {
            "lorenz" => {
                cfg.train.optimizer = OptimizerConfig::adam(3e-3);
                cfg.train.batch_size = 2000;
            }
            "lvpp" => cfg.grid_step = 0.25,
            "lorenz96" => cfg.grid_step = 1.0,
            "double-pendulum" => {
                cfg.grid_step = 0.25;
                cfg.t_end = 20.0;
                cfg.dt = 0.001;
                cfg.infer.init = InitStrategy::BestTrainingParam;
            }
            _ => {}
        }
        if system == "lorenz96" {
            cfg.infer.init = InitStrategy::BestTrainingParam;
        }
        cfg
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        system_by_name(&self.system, &self.system_options)
    }

    pub fn training_grid(&self, system: &dyn DynamicalSystem) -> Result<ParamGrid> {
        match &self.grid {
            Some(g) => Ok(g.clone()),
            None => ParamGrid::lattice(system.param_box(), self.grid_step),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sys = self.system_spec()?;
        if !(self.dt > 0.0 && self.t_end >= self.dt) {
            return Err(Error::arg(format!("need 0 < dt ≤ t_end, got dt={} t_end={}", self.dt, self.t_end)));
        }
        if self.test_count == 0 {
            return Err(Error::arg("test_count must be ≥ 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::arg("hidden layers must be non-empty with positive widths"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != sys.state_dim() {
                return Err(Error::shape(format!("x0 has {} components, system expects {}", x0.len(), sys.state_dim())));
            }
        }
        if let Some(spec) = self.representation.embedding(sys.state_dim())? {
            if let Some(&c) = spec.channels.iter().find(|&&c| c >= sys.state_dim()) {
                return Err(Error::arg(format!("channel {c} out of range for `{}`", self.system)));
            }
        }
        if self.backend == Backend::Oracle && self.representation != Representation::FullState {
            return Err(Error::arg("the oracle backend needs the full state"));
        }
        self.train.validate()?;
        self.infer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub test_index: usize,
    pub true_alpha: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub test_index: usize,
    pub param_index: usize,
    pub true_value: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub test_index: usize,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: usize,
    pub train_rows: usize,
    pub final_heldout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub representation: Representation,
    pub backend: Backend,
    pub param_labels: Vec<String>,
    /// `None` where the true values of a parameter are constant.
    pub r_squared: Vec<Option<f64>>,
    pub mae: Vec<f64>,
    pub scatter: Vec<ScatterPoint>,
    pub outliers: Vec<Outlier>,
    pub failures: Vec<Failure>,
    pub training: Option<TrainingSummary>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl EvalReport {
    /// Scatter as CSV: `param_index,true,predicted`.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("param_index,true,predicted\n");
        for j in 0..self.param_labels.len() {
            for p in &self.scatter {
                out.push_str(&format!("{j},{:e},{:e}\n", p.true_alpha[j], p.predicted[j]));
            }
        }
        out
    }

    /// Smallest per-parameter R², if every one is defined.
    pub fn min_r_squared(&self) -> Option<f64> {
        self.r_squared.iter().try_fold(f64::INFINITY, |m, r| r.map(|r| m.min(r)))
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn represent(set: TrajectorySet, spec: &Option<EmbeddingSpec>) -> Result<TrajectorySet> {
    match spec {
        Some(s) => set.embed(s),
        None => Ok(set),
    }
}

fn artifact(dir: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    dir.as_ref().map(|d| d.join(name))
}

fn record<C: Serialize>(path: &Path, cfg: &C, inputs: &[&Path]) -> Result<()> {
    write_sidecar(path, cfg, inputs)
}

/// Generates data, trains, infers on sampled test parameters and scores the
/// estimates. Artifacts go to `output_dir` when set.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<EvalReport> {
    let started = Instant::now();
    stage("config", cfg.validate())?;
    let sys = stage("config", cfg.system_spec())?;
    let x0 = cfg.x0.clone().unwrap_or_else(|| sys.default_x0());
    let embedding = stage("config", cfg.representation.embedding(sys.state_dim()))?;
    let width = cfg.representation.width(sys.state_dim());
    let dir = &cfg.output_dir;
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e).in_stage("config"))?;
        stage("config", write_json(&d.join("config.json"), cfg))?;
    }

    let grid = stage("generate", cfg.training_grid(sys.as_ref()))?;
    let train_points = stage("generate", grid.points())?;
    let mut model_files: Vec<PathBuf> = Vec::new();
    let (model, training) = if cfg.backend == Backend::Oracle {
        (None, None)
    } else if let Some(path) = &cfg.model {
        let model = stage("train", load_model(path))?;
        model_files.push(path.clone());
        (Some(model), None)
    } else {
        let outcome = stage("generate", integrate_points(sys.as_ref(), &train_points, &x0, cfg.t_end, cfg.dt, &cfg.method, jobs))?;
        if let Some((i, _, e)) = outcome.failures.into_iter().next() {
            return Err(Error::arg(format!("training trajectory {i}: {e}")).in_stage("generate"));
        }
        let set_path = artifact(dir, "train.set");
        if let Some(p) = &set_path {
            stage("generate", save_trajectories(&outcome.set, p))?;
            stage("generate", record(p, cfg, &[]))?;
        }
        let set = stage("embed", represent(outcome.set, &embedding))?;
        let data = stage(
            "dataset",
            build_supervised_with(&set, SupervisedOptions { normalize: cfg.normalize, ..SupervisedOptions::default() }),
        )?;
        let mut dims = vec![width + sys.param_dim()];
        dims.extend(&cfg.hidden);
        dims.push(width);
        let init = stage("train", init_model(&dims, cfg.activation, width, cfg.model_seed))?;
        drop(set);
        let (model, report) = stage("train", train(init, &data, &cfg.train))?;
        log::info!("trained {} steps, held-out loss {:?}", report.steps, report.final_heldout_loss);
        if let Some(d) = dir {
            let mp = d.join("model.idmdl");
            stage("train", save_model(&model, &mp))?;
            let set_path = set_path.as_deref().expect("output dir set");
            stage("train", record(&mp, cfg, &[set_path]))?;
            stage("train", persist_train_report(&report, d, cfg))?;
            model_files.push(mp);
        }
        let summary = TrainingSummary { steps: report.steps, train_rows: report.train_rows, final_heldout_loss: report.final_heldout_loss };
        (Some(model), Some(summary))
    };
    if let Some(m) = &model {
        stage("infer", m.expect_dims(width + sys.param_dim(), width))?;
    }

    let test_points = sample_uniform(sys.param_box(), cfg.test_count, cfg.test_seed);
    let test = stage("test", integrate_points(sys.as_ref(), &test_points, &x0, cfg.t_end, cfg.dt, &cfg.method, jobs))?;
    let mut failures: Vec<Failure> = test
        .failures
        .iter()
        .map(|(i, _, e)| Failure { test_index: *i, stage: "test".into(), error: e.to_string() })
        .collect();
    let failed: Vec<usize> = test.failures.iter().map(|f| f.0).collect();
    let indices: Vec<usize> = (0..test_points.len()).filter(|i| !failed.contains(i)).collect();
    let test_path = artifact(dir, "test.set");
    if let Some(p) = &test_path {
        stage("test", save_trajectories(&test.set, p))?;
        stage("test", record(p, cfg, &[]))?;
    }
    let test_set = stage("embed", represent(test.set, &embedding))?;

    let results: Vec<Result<InferenceResult>> = match &model {
        Some(m) => {
            let space = SearchSpace::new(sys.param_box().clone()).with_candidates(train_points.clone());
            infer_batch(m, &test_set.trajectories, &space, &cfg.infer, jobs)
        }
        None => test_set.trajectories.iter().map(|t| oracle_result(sys.as_ref(), t)).collect(),
    };
    if let Some(d) = dir {
        let rp = d.join("results.jsonl");
        stage("infer", write_results_jsonl(&rp, &results))?;
        let mut inputs: Vec<&Path> = model_files.iter().map(PathBuf::as_path).collect();
        inputs.extend(test_path.as_deref());
        stage("infer", record(&rp, cfg, &inputs))?;
    }

    let mut scatter = Vec::new();
    for (&i, r) in indices.iter().zip(results) {
        match r {
            Ok(r) => scatter.push(ScatterPoint { test_index: i, true_alpha: test_points[i].clone(), predicted: r.alpha_hat }),
            Err(e) => failures.push(Failure { test_index: i, stage: "infer".into(), error: e.to_string() }),
        }
    }
    failures.sort_by_key(|f| f.test_index);
    let report = score(cfg, sys.as_ref(), scatter, failures, training, started.elapsed())?;
    if let Some(d) = dir {
        let jp = d.join("report.json");
        stage("report", write_json(&jp, &report))?;
        let cp = d.join("scatter.csv");
        stage("report", atomic_write(&cp, report.scatter_csv().as_bytes()))?;
        let rp = d.join("results.jsonl");
        stage("report", record(&jp, cfg, &[&rp]))?;
        stage("report", record(&cp, cfg, &[&rp]))?;
    }
    Ok(report)
}

fn persist_train_report(report: &TrainReport, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let jp = dir.join("train_report.json");
    write_json(&jp, report)?;
    let cp = dir.join("loss_curve.csv");
    report.write_curve_csv(&cp)?;
    let model = dir.join("model.idmdl");
    record(&jp, cfg, &[&model])?;
    record(&cp, cfg, &[&model])
}

fn oracle_result(sys: &dyn DynamicalSystem, traj: &Trajectory) -> Result<InferenceResult> {
    let (alpha, _) = affine_least_squares(sys, traj)?;
    Ok(InferenceResult {
        init_used: alpha.clone(),
        alpha_hat: alpha,
        true_alpha: Some(traj.params.clone()),
        loss_trace: Vec::new(),
        iters_used: 0,
        termination: crate::infer::Termination::MaxIters,
    })
}

fn score(
    cfg: &ExperimentConfig,
    sys: &dyn DynamicalSystem,
    scatter: Vec<ScatterPoint>,
    failures: Vec<Failure>,
    training: Option<TrainingSummary>,
    runtime: Duration,
) -> Result<EvalReport> {
    let m = sys.param_dim();
    let widths = sys.param_box().widths();
    let mut r2 = Vec::with_capacity(m);
    let mut mae = Vec::with_capacity(m);
    let mut outliers = Vec::new();
    for j in 0..m {
        let t: Vec<f64> = scatter.iter().map(|p| p.true_alpha[j]).collect();
        let p: Vec<f64> = scatter.iter().map(|p| p.predicted[j]).collect();
        r2.push(match r_squared(&t, &p) {
            Ok(v) => Some(v),
            Err(Error::UndefinedRSquared) => None,
            Err(e) if scatter.is_empty() => {
                log::warn!("no successful test trajectories: {e}");
                None
            }
            Err(e) => return Err(e.in_stage("report")),
        });
        mae.push(mean_abs_error(&t, &p));
    }
    for s in &scatter {
        for j in 0..m {
            if (s.predicted[j] - s.true_alpha[j]).abs() > OUTLIER_FRACTION * widths[j] {
                outliers.push(Outlier { test_index: s.test_index, param_index: j, true_value: s.true_alpha[j], predicted: s.predicted[j] });
            }
        }
    }
    Ok(EvalReport {
        system: cfg.system.clone(),
        representation: cfg.representation.clone(),
        backend: cfg.backend,
        param_labels: sys.param_labels(),
        r_squared: r2,
        mae,
        scatter,
        outliers,
        failures,
        training,
        runtime,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub representation: Representation,
    pub r_squared: Vec<Option<f64>>,
    pub mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationTable {
    pub param_labels: Vec<String>,
    pub rows: Vec<RepresentationRow>,
}

impl RepresentationTable {
    /// CSV with one row per representation and one R² column per parameter.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("representation");
        for l in &self.param_labels {
            out.push_str(&format!(",r2_{l}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("\"{}\"", r.representation.label()));
            for v in &r.r_squared {
                out.push_str(&v.map(|v| format!(",{v:.6}")).unwrap_or_else(|| ",".into()));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs configurations that differ only in representation and tabulates R².
pub fn compare_representations(cfgs: &[ExperimentConfig], jobs: usize) -> Result<(RepresentationTable, Vec<EvalReport>)> {
    let first = cfgs.first().ok_or_else(|| Error::arg("no configurations to compare"))?;
    let strip = |c: &ExperimentConfig| ExperimentConfig { representation: Representation::FullState, output_dir: None, ..c.clone() };
    if cfgs.iter().any(|c| strip(c) != strip(first)) {
        return Err(Error::arg("configurations must differ only in representation and output directory"));
    }
    let reports = cfgs.iter().map(|c| run_experiment(c, jobs)).collect::<Result<Vec<_>>>()?;
    let rows = reports
        .iter()
        .map(|r| RepresentationRow { representation: r.representation.clone(), r_squared: r.r_squared.clone(), mae: r.mae.clone() })
        .collect();
    let labels = reports[0].param_labels.clone();
    Ok((RepresentationTable { param_labels: labels, rows }, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(matches!(r_squared(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::UndefinedRSquared)));
        assert!(r_squared(&[], &[]).is_err());
        assert!(r_squared(&[1.0, 2.0], &[1.0]).is_err());
        assert!(r_squared(&[1.0, 2.0], &[10.0, -40.0]).unwrap() <= 1.0);
    }

    #[test]
    fn r_squared_affine_invariance() {
        let t = [0.3, 1.7, -2.2, 5.0, 0.9];
        let p = [0.1, 1.9, -2.0, 4.4, 1.3];
        let base = r_squared(&t, &p).unwrap();
        for (a, b) in [(3.0, -7.0), (1e-3, 2.0), (250.0, 1e4)] {
            let ts: Vec<f64> = t.iter().map(|v| a * v + b).collect();
            let ps: Vec<f64> = p.iter().map(|v| a * v + b).collect();
            assert!((r_squared(&ts, &ps).unwrap() - base).abs() <= 1e-12);
        }
    }

    fn tiny_lvpp() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk("lvpp");
        cfg.grid_step = 1.0;
        cfg.t_end = 5.0;
        cfg.dt = 0.01;
        cfg.test_count = 4;
        cfg.hidden = vec![16, 16];
        cfg.train.epochs = 50;
        cfg.infer.max_iters = 20;
        cfg
    }

    #[test]
    fn oracle_backed_lvpp_is_near_perfect() {
        let cfg = ExperimentConfig { backend: Backend::Oracle, test_count: 20, dt: 0.001, t_end: 20.0, ..tiny_lvpp() };
        let report = run_experiment(&cfg, 1).unwrap();
        assert!(report.training.is_none());
        assert_eq!(report.scatter.len(), 20);
        assert!(report.min_r_squared().unwrap() >= 0.999, "{:?}", report.r_squared);
        assert!(report.outliers.is_empty());
    }

    #[test]
    fn neural_run_is_deterministic_and_persists_artifacts() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = ExperimentConfig { output_dir: Some(dir_a.path().to_path_buf()), ..tiny_lvpp() };
        let cfg_b = ExperimentConfig { output_dir: Some(dir_b.path().to_path_buf()), ..tiny_lvpp() };
        let a = run_experiment(&cfg_a, 1).unwrap();
        let b = run_experiment(&cfg_b, 2).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.scatter.len() + a.failures.len(), 4);
        assert_eq!(a.training.as_ref().unwrap().steps, 50);
        for name in ["train.set", "model.idmdl", "train_report.json", "loss_curve.csv", "test.set", "results.jsonl", "report.json", "scatter.csv"] {
            let fa = fs::read(dir_a.path().join(name)).unwrap();
            let fb = fs::read(dir_b.path().join(name)).unwrap();
            assert!(fa == fb || name == "config.json", "{name} differs");
            assert!(crate::io::sidecar_path(&dir_a.path().join(name)).exists(), "{name} sidecar");
        }
        let csv = fs::read_to_string(dir_a.path().join("scatter.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4 * a.scatter.len());
    }

    #[test]
    fn mismatched_model_fails_before_inference() {
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("m.idmdl");
        save_model(&init_model(&[6, 8, 2], Activation::Relu, 2, 0).unwrap(), &mp).unwrap();
        let cfg = ExperimentConfig {
            representation: Representation::ScalarDelay { channel: 0, tau: 5, dim: 3 },
            model: Some(mp),
            ..tiny_lvpp()
        };
        let err = run_experiment(&cfg, 1).unwrap_err();
        assert!(matches!(&err, Error::Stage { stage: "infer", .. }), "{err}");
        assert!(matches!(err.root(), Error::Shape(_)));
    }

    #[test]
    fn validation_and_comparison_consistency() {
        let bad = ExperimentConfig { backend: Backend::Oracle, representation: Representation::ScalarDelay { channel: 0, tau: 1, dim: 2 }, ..tiny_lvpp() };
        assert!(matches!(run_experiment(&bad, 1), Err(Error::Stage { stage: "config", .. })));
        let unknown = ExperimentConfig { system: "nope".into(), ..tiny_lvpp() };
        assert!(run_experiment(&unknown, 1).is_err());
        let a = tiny_lvpp();
        let b = ExperimentConfig { test_seed: 9, ..tiny_lvpp() };
        assert!(compare_representations(&[a, b], 1).is_err());
        assert!(compare_representations(&[], 1).is_err());
    }

    #[test]
    fn comparison_rows_share_the_test_set() {
        let base = ExperimentConfig { train: TrainConfig { epochs: 10, ..tiny_lvpp().train }, ..tiny_lvpp() };
        let cfgs = [
            base.clone(),
            ExperimentConfig { representation: Representation::FullStateSpacedDelay { tau: 1, copies: 2 }, ..base.clone() },
            ExperimentConfig { representation: Representation::FullStateSpacedDelay { tau: 20, copies: 2 }, ..base.clone() },
            base.clone(),
        ];
        let (table, reports) = compare_representations(&cfgs, 1).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert_eq!(table.rows[0], table.rows[3]);
        let truths: Vec<Vec<Vec<f64>>> = reports.iter().map(|r| r.scatter.iter().map(|s| s.true_alpha.clone()).collect()).collect();
        assert!(truths.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(table.to_csv().lines().count(), 5);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"system": "lorenz", "representation": {"kind": "scalar_delay", "channel": 0, "tau": 16, "dim": 7}}"#).unwrap();
        assert_eq!(cfg.representation.width(3), 7);
        assert_eq!(cfg.hidden, vec![128, 128, 128]);
        assert_eq!(cfg.grid_step, 0.5);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
