//! Inference stage: recover α for an unlabeled trajectory by descending the
//! velocity-matching loss through a frozen model.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::finite_differences;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::io::atomic_write;
use crate::net::{MlpModel, OptimizerConfig};
use crate::par;
use crate::systems::{evaluate_affine, DynamicalSystem, ParamBox, SystemSpec};

/// Anything that predicts velocities from `(state, α)` and can report the
/// gradient of its mean squared error with respect to α.
pub trait VelocityModel: Sync {
    fn state_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Converts raw states and finite-difference targets into working units.
    fn prepare(&self, states: Array2<f64>, targets: Array2<f64>) -> (Array2<f64>, Array2<f64>);

    /// Mean squared error over rows and outputs of prepared pairs at `alpha`
    /// (raw units), and its gradient with respect to `alpha`.
    fn loss_and_grad(&self, states: ArrayView2<f64>, targets: ArrayView2<f64>, alpha: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl VelocityModel for MlpModel {
    fn state_dim(&self) -> usize {
        self.input_split
    }

    fn param_dim(&self) -> usize {
        self.param_input_dim()
    }

    fn prepare(&self, mut states: Array2<f64>, mut targets: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        if let Some(n) = &self.normalization {
            n.inputs.slice(0, self.input_split).apply(&mut states);
            n.targets.apply(&mut targets);
        }
        (states, targets)
    }

    fn loss_and_grad(&self, states: ArrayView2<f64>, targets: ArrayView2<f64>, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.input_split;
        let mut z = alpha.to_vec();
        let mut scale = vec![1.0; alpha.len()];
        if let Some(n) = &self.normalization {
            let t = n.inputs.slice(d, self.input_dim());
            t.apply_row(&mut z);
            scale = t.scale;
        }
        let mut batch = Array2::zeros((states.nrows(), self.input_dim()));
        for (mut row, s) in batch.rows_mut().into_iter().zip(states.rows()) {
            let row = row.as_slice_mut().expect("standard layout");
            for (r, v) in row[..d].iter_mut().zip(s) {
                *r = *v;
            }
            row[d..].copy_from_slice(&z);
        }
        let (loss, g) = self.mse_and_input_grad(batch.view(), targets)?;
        let grad = (0..alpha.len()).map(|j| g.column(d + j).sum() / scale[j]).collect();
        Ok((loss, grad))
    }
}

/// The true vector field of a system used as a model, in raw units.
#[derive(Debug, Clone)]
pub struct ExactFieldModel {
    pub system: SystemSpec,
}

impl ExactFieldModel {
    pub fn new(system: impl DynamicalSystem + 'static) -> Self {
        Self { system: Arc::new(system) }
    }

    pub fn from_spec(system: SystemSpec) -> Self {
        Self { system }
    }

    fn loss(&self, states: ArrayView2<f64>, targets: ArrayView2<f64>, alpha: &[f64]) -> f64 {
        let mut f = vec![0.0; self.system.state_dim()];
        let mut total = 0.0;
        for (s, y) in states.rows().into_iter().zip(targets.rows()) {
            self.system.velocity(s.as_slice().expect("standard layout"), alpha, &mut f);
            total += f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        total / targets.len().max(1) as f64
    }
}

impl VelocityModel for ExactFieldModel {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn param_dim(&self) -> usize {
        self.system.param_dim()
    }

    fn prepare(&self, states: Array2<f64>, targets: Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        (states, targets)
    }

    fn loss_and_grad(&self, states: ArrayView2<f64>, targets: ArrayView2<f64>, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = alpha.len();
        if !self.system.is_affine() {
            let loss = self.loss(states, targets, alpha);
            let mut grad = vec![0.0; m];
            let mut a = alpha.to_vec();
            for j in 0..m {
                let h = 1e-6 * alpha[j].abs().max(1.0);
                a[j] = alpha[j] + h;
                let up = self.loss(states, targets, &a);
                a[j] = alpha[j] - h;
                let down = self.loss(states, targets, &a);
                a[j] = alpha[j];
                grad[j] = (up - down) / (2.0 * h);
            }
            return Ok((loss, grad));
        }
        let count = targets.len().max(1) as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; m];
        let a = ndarray::ArrayView1::from(alpha);
        for (s, y) in states.rows().into_iter().zip(targets.rows()) {
            let (l, b) = evaluate_affine(self.system.as_ref(), s.as_slice().expect("standard layout"))?;
            let r = l.dot(&a) + b - y;
            loss += r.dot(&r);
            for (g, v) in grad.iter_mut().zip(l.t().dot(&r)) {
                *g += 2.0 * v / count;
            }
        }
        Ok((loss / count, grad))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "alpha")]
pub enum InitStrategy {
    #[default]
    BoxMidpoint,
    /// The candidate training parameter with the lowest full-batch loss.
    BestTrainingParam,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub optimizer: OptimizerConfig,
    pub max_iters: usize,
    /// Rows per step; `None` uses every pair.
    pub batch_size: Option<usize>,
    pub init: InitStrategy,
    /// Stop when the gradient norm falls to this value (0 disables).
    pub grad_tol: f64,
    /// Stop when the mean loss over a window improves by less than this
    /// fraction of the previous window's mean (0 disables).
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub clip_to_box: bool,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::sgd(1e-4, 0.99),
            max_iters: 20_000,
            batch_size: Some(500),
            init: InitStrategy::BoxMidpoint,
            grad_tol: 0.0,
            plateau_tol: 1e-10,
            plateau_window: 200,
            clip_to_box: true,
            seed: 0,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be ≥ 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::arg("batch size must be ≥ 1"));
        }
        if !(self.grad_tol >= 0.0 && self.plateau_tol >= 0.0) {
            return Err(Error::arg("tolerances must be non-negative"));
        }
        if self.plateau_window == 0 {
            return Err(Error::arg("plateau window must be ≥ 1"));
        }
        Ok(())
    }
}

/// Admissible parameters and the labeled training parameters.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub bounds: ParamBox,
    pub candidates: Vec<Vec<f64>>,
}

impl SearchSpace {
    pub fn new(bounds: ParamBox) -> Self {
        Self { bounds, candidates: Vec::new() }
    }

    pub fn with_candidates(mut self, candidates: Vec<Vec<f64>>) -> Self {
        self.candidates = candidates;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    GradTol,
    Plateau,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub alpha_hat: Vec<f64>,
    pub true_alpha: Option<Vec<f64>>,
    pub loss_trace: Vec<f64>,
    pub iters_used: usize,
    pub init_used: Vec<f64>,
    pub termination: Termination,
}

#[derive(Serialize)]
struct ResultLine<'a> {
    alpha_hat: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    true_alpha: Option<&'a [f64]>,
    iters: usize,
    termination: Termination,
    init: &'a [f64],
    final_loss: Option<f64>,
}

impl InferenceResult {
    pub fn json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&ResultLine {
            alpha_hat: &self.alpha_hat,
            true_alpha: self.true_alpha.as_deref(),
            iters: self.iters_used,
            termination: self.termination,
            init: &self.init_used,
            final_loss: self.loss_trace.last().copied(),
        })?)
    }
}

/// Writes one JSON object per result; failed items become `{"error": ...}`.
pub fn write_results_jsonl(path: &Path, results: &[Result<InferenceResult>]) -> Result<()> {
    let mut out = Vec::new();
    for r in results {
        match r {
            Ok(r) => writeln!(out, "{}", r.json_line()?),
            Err(e) => writeln!(out, "{}", serde_json::json!({ "error": e.to_string() })),
        }
        .map_err(|e| Error::io(path, e))?;
    }
    atomic_write(path, &out)
}

/// Finite-difference pairs of a trajectory in the model's working units.
pub fn inference_pairs(model: &dyn VelocityModel, traj: &Trajectory) -> Result<(Array2<f64>, Array2<f64>)> {
    if traj.width() != model.state_dim() {
        return Err(Error::shape(format!(
            "trajectory width {} does not match model state width {}",
            traj.width(),
            model.state_dim()
        )));
    }
    if traj.len() < 2 {
        return Err(Error::InsufficientLength { needed: 1, available: traj.len() });
    }
    let (states, targets) = finite_differences(traj.states.view(), traj.dt);
    Ok(model.prepare(states, targets))
}

/// Full-batch inference loss at `alpha`.
pub fn inference_loss(model: &dyn VelocityModel, traj: &Trajectory, alpha: &[f64]) -> Result<f64> {
    check_alpha(model, alpha)?;
    let (x, y) = inference_pairs(model, traj)?;
    Ok(model.loss_and_grad(x.view(), y.view(), alpha)?.0)
}

fn check_alpha(model: &dyn VelocityModel, alpha: &[f64]) -> Result<()> {
    if alpha.len() != model.param_dim() {
        return Err(Error::shape(format!("α has {} components, model expects {}", alpha.len(), model.param_dim())));
    }
    Ok(())
}

/// The candidate with the lowest full-batch loss; ties go to the first.
pub fn best_training_init(model: &dyn VelocityModel, traj: &Trajectory, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::arg("no candidate parameters"));
    }
    let (x, y) = inference_pairs(model, traj)?;
    let mut best: Option<(f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        check_alpha(model, c)?;
        let loss = model.loss_and_grad(x.view(), y.view(), c)?.0;
        if best.is_none_or(|(b, _)| loss < b) {
            best = Some((loss, i));
        }
    }
    Ok(candidates[best.expect("non-empty").1].clone())
}

/// Descends the inference loss in α from the configured starting point.
pub fn infer(model: &dyn VelocityModel, traj: &Trajectory, space: &SearchSpace, cfg: &InferConfig) -> Result<InferenceResult> {
    cfg.validate()?;
    if space.bounds.dim() != model.param_dim() {
        return Err(Error::shape(format!(
            "parameter box has {} axes, model expects {}",
            space.bounds.dim(),
            model.param_dim()
        )));
    }
    let (x, y) = inference_pairs(model, traj)?;
    let init = match &cfg.init {
        InitStrategy::BoxMidpoint => space.bounds.midpoint(),
        InitStrategy::Explicit(a) => a.clone(),
        InitStrategy::BestTrainingParam => best_training_init(model, traj, &space.candidates)?,
    };
    check_alpha(model, &init)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = cfg.optimizer.build()?;
    let mut alpha = init.clone();
    if cfg.clip_to_box {
        space.bounds.clip(&mut alpha);
    }
    let n = x.nrows();
    let batch = cfg.batch_size.filter(|&b| b < n);
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut previous_window: Option<f64> = None;
    for it in 0..cfg.max_iters {
        let (loss, grad) = match batch {
            None => model.loss_and_grad(x.view(), y.view(), &alpha)?,
            Some(b) => {
                let rows = rand::seq::index::sample(&mut rng, n, b).into_vec();
                let xb = x.select(Axis(0), &rows);
                let yb = y.select(Axis(0), &rows);
                model.loss_and_grad(xb.view(), yb.view(), &alpha)?
            }
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            termination = Termination::Diverged;
            break;
        }
        trace.push(loss);
        let mut next = alpha.clone();
        opt.step(&mut next, &grad)?;
        if cfg.clip_to_box {
            space.bounds.clip(&mut next);
        }
        if next.iter().any(|a| !a.is_finite()) {
            termination = Termination::Diverged;
            break;
        }
        alpha = next;
        if cfg.grad_tol > 0.0 && grad.iter().map(|g| g * g).sum::<f64>().sqrt() <= cfg.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        let w = cfg.plateau_window;
        if cfg.plateau_tol > 0.0 && (it + 1) % w == 0 {
            let mean = trace[trace.len() - w..].iter().sum::<f64>() / w as f64;
            if let Some(prev) = previous_window {
                if prev - mean < cfg.plateau_tol * prev.abs() {
                    termination = Termination::Plateau;
                    break;
                }
            }
            previous_window = Some(mean);
        }
    }
    let true_alpha = (traj.params.len() == alpha.len()).then(|| traj.params.clone());
    Ok(InferenceResult { alpha_hat: alpha, true_alpha, iters_used: trace.len(), loss_trace: trace, init_used: init, termination })
}

/// Independent inference per trajectory, in input order. Every item uses the
/// same seed, so results do not depend on batch composition.
pub fn infer_batch(
    model: &dyn VelocityModel,
    trajs: &[Trajectory],
    space: &SearchSpace,
    cfg: &InferConfig,
    jobs: usize,
) -> Vec<Result<InferenceResult>> {
    par::map_ordered(trajs, jobs, |_, t| infer(model, t, space, cfg))
}
