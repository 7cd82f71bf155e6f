//! Learning stage: fit the network to finite-difference velocity targets.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SupervisedSet;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::net::{MlpModel, OptimizerConfig};

/// Held-out loss is evaluated on at most this many rows.
const MAX_EVAL_ROWS: usize = 20_000;
const LOSS_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochUnits {
    /// One epoch is one minibatch gradient step.
    #[default]
    Steps,
    /// One epoch is a full pass over the training pairs.
    Passes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub units: EpochUnits,
    pub seed: u64,
    pub eval_fraction: f64,
    /// Stop after this many evaluations without held-out improvement.
    pub early_stop_patience: Option<usize>,
    /// Gradient steps between loss-curve points.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::adam(1e-3),
            batch_size: 500,
            epochs: 5000,
            units: EpochUnits::Steps,
            seed: 0,
            eval_fraction: 0.05,
            early_stop_patience: None,
            eval_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn lr(&self) -> f64 {
        self.optimizer.lr()
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::arg(format!("eval fraction {} outside [0, 1)", self.eval_fraction)));
        }
        if self.eval_every == 0 {
            return Err(Error::arg("eval_every must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean minibatch loss since the previous point.
    pub train_loss: f64,
    pub heldout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub steps: usize,
    pub train_rows: usize,
    pub heldout_rows: usize,
    pub curve: Vec<CurvePoint>,
    pub final_heldout_loss: Option<f64>,
    pub stopped_early: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_path: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    /// Loss curve as CSV: `step,train_loss,heldout_loss`.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,train_loss,heldout_loss\n");
        for p in &self.curve {
            let h = p.heldout_loss.map(|v| format!("{v:e}")).unwrap_or_default();
            out.push_str(&format!("{},{:e},{}\n", p.step, p.train_loss, h));
        }
        out
    }

    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.curve_csv().as_bytes())
    }
}

/// Mean squared residual over all rows and outputs, evaluated in chunks.
pub fn train_loss(model: &MlpModel, data: &SupervisedSet) -> Result<f64> {
    model.expect_dims(data.input_dim(), data.output_dim())?;
    rows_loss(model, data, &(0..data.len()).collect::<Vec<_>>())
}

fn rows_loss(model: &MlpModel, data: &SupervisedSet, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for chunk in rows.chunks(LOSS_CHUNK) {
        let x = data.inputs.select(Axis(0), chunk);
        let y = data.targets.select(Axis(0), chunk);
        total += model.mse(x.view(), y.view())? * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Seeded minibatch optimization of the mean squared error. The returned
/// model carries the data's normalization statistics.
pub fn train(mut model: MlpModel, data: &SupervisedSet, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    model.expect_dims(data.input_dim(), data.output_dim())?;
    if data.is_empty() {
        return Err(Error::arg("no training pairs"));
    }
    model.input_split = data.state_dim;
    model.normalization = data.normalization.clone();
    let started = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_eval = ((data.len() as f64) * cfg.eval_fraction).floor() as usize;
    let n_eval = n_eval.min(data.len() - 1);
    let (eval_rows, train_rows) = order.split_at(n_eval);
    let eval_rows = &eval_rows[..eval_rows.len().min(MAX_EVAL_ROWS)];
    let mut train_rows = train_rows.to_vec();

    let batch = cfg.batch_size.min(train_rows.len());
    let steps_per_pass = train_rows.len().div_ceil(batch);
    let total_steps = match cfg.units {
        EpochUnits::Steps => cfg.epochs,
        EpochUnits::Passes => cfg.epochs * steps_per_pass,
    };

    let mut opt = cfg.optimizer.build()?;
    let mut curve = Vec::new();
    let mut window = (0.0, 0usize);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut cursor = steps_per_pass;
    let mut step = 0;
    while step < total_steps {
        if cursor == steps_per_pass {
            train_rows.shuffle(&mut rng);
            cursor = 0;
        }
        let rows = &train_rows[cursor * batch..((cursor + 1) * batch).min(train_rows.len())];
        cursor += 1;
        let x = data.inputs.select(Axis(0), rows);
        let y = data.targets.select(Axis(0), rows);
        let (loss, grad) = model.mse_and_weight_grad(x.view(), y.view())?;
        let epoch = match cfg.units {
            EpochUnits::Steps => step,
            EpochUnits::Passes => step / steps_per_pass,
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, lr: cfg.lr() });
        }
        opt.step(&mut model.params, &grad)?;
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch, lr: cfg.lr() });
        }
        step += 1;
        window.0 += loss;
        window.1 += 1;

        if step % cfg.eval_every == 0 || step == total_steps {
            let heldout = if eval_rows.is_empty() { None } else { Some(rows_loss(&model, data, eval_rows)?) };
            if heldout.is_some_and(|h| !h.is_finite()) {
                return Err(Error::Divergence { epoch, lr: cfg.lr() });
            }
            curve.push(CurvePoint { step, train_loss: window.0 / window.1 as f64, heldout_loss: heldout });
            log::debug!("step {step}: train {:.3e} heldout {:?}", window.0 / window.1 as f64, heldout);
            window = (0.0, 0);
            if let (Some(patience), Some(h)) = (cfg.early_stop_patience, heldout) {
                if best.as_ref().is_none_or(|(b, _)| h < *b) {
                    best = Some((h, model.params.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    if let (true, Some((_, params))) = (stopped_early, best) {
        model.params = params;
    }
    let final_heldout_loss = if eval_rows.is_empty() || step == 0 { None } else { Some(rows_loss(&model, data, eval_rows)?) };
    let report = TrainReport {
        config: cfg.clone(),
        steps: step,
        train_rows: train_rows.len(),
        heldout_rows: eval_rows.len(),
        curve,
        final_heldout_loss,
        stopped_early,
        model_path: None,
        wall_time: started.elapsed(),
    };
    Ok((model, report))
}
