use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First-order update rule with its own state buffers.
pub trait Optimizer: Send + Debug {
    fn name(&self) -> &'static str;
    fn lr(&self) -> f64;
    fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()>;
}

fn check(params: &[f64], grads: &[f64], state: &mut Vec<f64>) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
    }
    if state.is_empty() {
        state.resize(params.len(), 0.0);
    } else if state.len() != params.len() {
        return Err(Error::shape(format!("optimizer state holds {} slots, got {}", state.len(), params.len())));
    }
    Ok(())
}

/// `v ← μv + g`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: Vec::new() }
    }
}

impl Optimizer for SgdMomentum {
    fn name(&self) -> &'static str {
        "sgd_momentum"
    }

    fn lr(&self) -> f64 {
        self.lr
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check(params, grads, &mut self.velocity)?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
        Ok(())
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: Vec::new(), v: Vec::new(), t: 0 }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn lr(&self) -> f64 {
        self.lr
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check(params, grads, &mut self.m)?;
        check(params, grads, &mut self.v)?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Serializable optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    SgdMomentum {
        lr: f64,
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_momentum() -> f64 {
    0.99
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerConfig::SgdMomentum { lr, momentum }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::SgdMomentum { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::SgdMomentum { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid optimizer settings {self:?}")))
        }
    }

    pub fn build(&self) -> Result<Box<dyn Optimizer>> {
        self.validate()?;
        Ok(match *self {
            OptimizerConfig::SgdMomentum { lr, momentum } => Box::new(SgdMomentum::new(lr, momentum)),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => Box::new(Adam::new(lr, beta1, beta2, eps)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_descent() {
        let mut opt = SgdMomentum::new(0.1, 0.0);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -0.7, 2.0];
        let want: Vec<f64> = p.iter().zip(&g).map(|(p, g)| p - 0.1 * g).collect();
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p, want);
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = SgdMomentum::new(1.0, 0.5);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        opt.step(&mut p, &[1.0]).unwrap();
        assert_eq!(p, vec![-2.5]);
        // zero gradient still moves by the remembered velocity
        opt.step(&mut p, &[0.0]).unwrap();
        assert_eq!(p, vec![-3.25]);
    }

    #[test]
    fn adam_first_step_is_lr_regardless_of_scale() {
        for g in [1e-6, 1.0, 1e6, -3.0] {
            let mut opt = Adam::new(0.01, 0.9, 0.999, 1e-8);
            let mut p = vec![0.0];
            opt.step(&mut p, &[g]).unwrap();
            let expected = -0.01 * g.signum() * g.abs() / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "g={g}: {}", p[0]);
            assert!((p[0].abs() - 0.01).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_gradient_keeps_params_for_fresh_state() {
        for cfg in [OptimizerConfig::sgd(0.1, 0.9), OptimizerConfig::adam(0.1)] {
            let mut opt = cfg.build().unwrap();
            let mut p = vec![1.0, 2.0];
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
            assert_eq!(p, vec![1.0, 2.0]);
        }
    }

    #[test]
    fn shape_mismatch_and_validation() {
        let mut opt = SgdMomentum::new(0.1, 0.9);
        assert!(opt.step(&mut [0.0, 1.0], &[1.0]).is_err());
        opt.step(&mut [0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(opt.step(&mut [0.0], &[1.0]).is_err());
        assert!(OptimizerConfig::sgd(-1.0, 0.9).build().is_err());
        assert!(OptimizerConfig::sgd(0.1, 1.0).build().is_err());
    }

    #[test]
    fn config_json() {
        let c: OptimizerConfig = serde_json::from_str(r#"{"kind": "sgd_momentum", "lr": 0.0001}"#).unwrap();
        assert_eq!(c, OptimizerConfig::sgd(1e-4, 0.99));
        let a: OptimizerConfig = serde_json::from_str(r#"{"kind": "adam", "lr": 0.001}"#).unwrap();
        assert_eq!(a, OptimizerConfig::adam(1e-3));
        assert_eq!(a.build().unwrap().name(), "adam");
    }
}
