//! Closed-form parameter recovery for systems affine in their parameters.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::finite_differences;
use crate::error::{Error, Result};
use crate::integrate::{integrate, Method, Trajectory};
use crate::io::atomic_write;
use crate::par;
use crate::systems::{evaluate_affine, velocity_of, DynamicalSystem};

/// Above this condition number the solve switches from Cholesky to the
/// eigen-decomposition.
pub const CHOLESKY_LIMIT: f64 = 1e10;
/// Above this condition number the parameters are reported as unidentifiable.
pub const IDENTIFIABLE_LIMIT: f64 = 1e12;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    total: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.total + v;
        if self.total.abs() >= v.abs() {
            self.carry += (self.total - t) + v;
        } else {
            self.carry += (v - t) + self.total;
        }
        self.total = t;
    }

    fn value(self) -> f64 {
        self.total + self.carry
    }
}

/// `E[LᵀL] α = E[Lᵀy]` over the samples of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalEquations {
    pub gram: Array2<f64>,
    pub moment: Array1<f64>,
    /// Ratio of the extreme eigenvalues of `gram`.
    pub condition: f64,
    pub samples: usize,
}

/// Symmetric eigenvalues, ascending, with eigenvectors as columns.
fn eigen(gram: &Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = gram.nrows();
    let g = DMatrix::from_fn(m, m, |i, j| gram[[i, j]]);
    let e = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m, m, |i, j| e.eigenvectors[(i, order[j])]);
    (values, vectors)
}

fn condition_of(values: &[f64]) -> f64 {
    let hi = values.last().copied().unwrap_or(0.0);
    let lo = values.first().copied().unwrap_or(0.0);
    if hi <= 0.0 || lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

impl NormalEquations {
    /// Accumulates `L_xᵀ L_x` and `L_xᵀ (v − b_x)` over paired states and velocities.
    pub fn accumulate(system: &dyn DynamicalSystem, states: ArrayView2<f64>, velocities: ArrayView2<f64>) -> Result<Self> {
        let (n, m) = (system.state_dim(), system.param_dim());
        if states.ncols() != n || velocities.dim() != states.dim() {
            return Err(Error::shape(format!(
                "states {:?} and velocities {:?} must both be P × {n}",
                states.dim(),
                velocities.dim()
            )));
        }
        if states.nrows() == 0 {
            return Err(Error::InsufficientLength { needed: 1, available: 0 });
        }
        let mut gram = vec![Sum::default(); m * m];
        let mut moment = vec![Sum::default(); m];
        for (x, v) in states.rows().into_iter().zip(velocities.rows()) {
            let (l, b) = evaluate_affine(system, &x.to_vec())?;
            let y = &v - &b;
            for i in 0..m {
                let li = l.column(i);
                for j in i..m {
                    gram[i * m + j].add(li.dot(&l.column(j)));
                }
                moment[i].add(li.dot(&y));
            }
        }
        let p = states.nrows() as f64;
        let gram = Array2::from_shape_fn((m, m), |(i, j)| gram[i.min(j) * m + i.max(j)].value() / p);
        let moment = Array1::from_iter(moment.into_iter().map(|s| s.value() / p));
        let condition = condition_of(&eigen(&gram).0);
        Ok(Self { gram, moment, condition, samples: states.nrows() })
    }

    /// Solves for α; Cholesky when well conditioned, eigen-decomposition otherwise.
    pub fn solve(&self) -> Result<Vec<f64>> {
        if !(self.condition <= IDENTIFIABLE_LIMIT) {
            return Err(Error::NonIdentifiable { condition: self.condition });
        }
        let m = self.moment.len();
        let g = DMatrix::from_fn(m, m, |i, j| self.gram[[i, j]]);
        let rhs = DVector::from_iterator(m, self.moment.iter().copied());
        if self.condition <= CHOLESKY_LIMIT {
            if let Some(c) = g.clone().cholesky() {
                return Ok(c.solve(&rhs).iter().copied().collect());
            }
        }
        let (values, vectors) = eigen(&self.gram);
        let coeffs = vectors.transpose() * rhs;
        let scaled = DVector::from_iterator(m, coeffs.iter().zip(&values).map(|(c, l)| c / l));
        Ok((vectors * scaled).iter().copied().collect())
    }
}

/// Least-squares α from forward-difference velocities of one trajectory.
pub fn affine_least_squares(system: &dyn DynamicalSystem, traj: &Trajectory) -> Result<(Vec<f64>, NormalEquations)> {
    if traj.width() != system.state_dim() {
        return Err(Error::shape(format!("trajectory width {} but system state has {}", traj.width(), system.state_dim())));
    }
    if traj.len() < 2 {
        return Err(Error::InsufficientLength { needed: 1, available: traj.len() });
    }
    let (states, velocities) = finite_differences(traj.states.view(), traj.dt);
    least_squares_from(system, states.view(), velocities.view())
}

/// As [`affine_least_squares`] with the true velocities `F(x, α₀)` as targets.
pub fn exact_velocity_least_squares(system: &dyn DynamicalSystem, traj: &Trajectory, alpha0: &[f64]) -> Result<(Vec<f64>, NormalEquations)> {
    let mut v = Array2::zeros(traj.states.dim());
    for (mut row, x) in v.rows_mut().into_iter().zip(traj.states.rows()) {
        row.assign(&Array1::from(velocity_of(system, &x.to_vec(), alpha0)));
    }
    least_squares_from(system, traj.states.view(), v.view())
}

pub fn least_squares_from(
    system: &dyn DynamicalSystem,
    states: ArrayView2<f64>,
    velocities: ArrayView2<f64>,
) -> Result<(Vec<f64>, NormalEquations)> {
    if !system.is_affine() {
        return Err(Error::NotAffine(system.name().to_string()));
    }
    let ne = NormalEquations::accumulate(system, states, velocities)?;
    Ok((ne.solve()?, ne))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One point of a sweep: the swept value and the absolute error per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub estimate: Vec<f64>,
    pub errors: Vec<f64>,
}

impl SweepPoint {
    /// Largest component error.
    pub fn error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Velocity targets used by [`dt_convergence_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    #[default]
    FiniteDifference,
    Exact,
}

/// Least-squares error against `alpha0` for trajectories sampled at each `dt`.
pub fn dt_convergence_sweep(
    system: &dyn DynamicalSystem,
    alpha0: &[f64],
    x0: &[f64],
    t_end: f64,
    dts: &[f64],
    targets: Targets,
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    if dts.is_empty() {
        return Err(Error::arg("no time steps given"));
    }
    if dts.iter().any(|&d| !(d > 0.0)) || dts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("time steps must be positive and decreasing"));
    }
    let method = Method::dopri5(1e-11);
    par::map_ordered(dts, jobs, |_, &dt| {
        let traj = integrate(system, alpha0, x0, t_end, dt, &method)?;
        let (estimate, _) = match targets {
            Targets::FiniteDifference => affine_least_squares(system, &traj)?,
            Targets::Exact => exact_velocity_least_squares(system, &traj, alpha0)?,
        };
        let errors = estimate.iter().zip(alpha0).map(|(a, b)| (a - b).abs()).collect();
        Ok(SweepPoint { value: dt, estimate, errors })
    })
    .into_iter()
    .collect()
}

/// Least-squares slope of `ln error` against `ln value`.
pub fn log_log_slope(points: &[SweepPoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|p| p.value > 0.0 && p.error() > 0.0).map(|p| (p.value.ln(), p.error().ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Smooth perturbation `ε·s·sin(w·x + v·α + φᵢ)` of a velocity field,
/// normalized so `|e| + |∂e/∂α| ≤ ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub state_weights: Vec<f64>,
    pub param_weights: Vec<f64>,
    pub phases: Vec<f64>,
}

impl Perturbation {
    /// A fixed perturbation for an `n`-state, `m`-parameter system.
    pub fn standard(n: usize, m: usize, alpha_dependent: bool) -> Self {
        Self {
            state_weights: (0..n).map(|i| 0.7 + 0.31 * i as f64).collect(),
            param_weights: (0..m).map(|j| if alpha_dependent { 0.9 - 0.23 * j as f64 } else { 0.0 }).collect(),
            phases: (0..n).map(|i| 0.4 + 1.1 * i as f64).collect(),
        }
    }

    fn norm(&self) -> f64 {
        let n = self.phases.len() as f64;
        n.sqrt() * (1.0 + self.param_weights.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// `e(x, α)` and `∂e/∂α` (`n × m`) at amplitude `eps`.
    pub fn evaluate(&self, eps: f64, x: &[f64], alpha: &[f64]) -> (Vec<f64>, Array2<f64>) {
        let s = eps / self.norm();
        let arg: f64 = x.iter().zip(&self.state_weights).map(|(a, b)| a * b).sum::<f64>()
            + alpha.iter().zip(&self.param_weights).map(|(a, b)| a * b).sum::<f64>();
        let e = self.phases.iter().map(|p| s * (arg + p).sin()).collect();
        let d = Array2::from_shape_fn((self.phases.len(), alpha.len()), |(i, j)| {
            s * (arg + self.phases[i]).cos() * self.param_weights[j]
        });
        (e, d)
    }
}

/// Gauss-Newton fit of `L_x α + b_x + e(x, α)` to the velocities.
fn perturbed_fit(
    system: &dyn DynamicalSystem,
    states: ArrayView2<f64>,
    velocities: ArrayView2<f64>,
    pert: &Perturbation,
    eps: f64,
    start: &[f64],
) -> Result<Vec<f64>> {
    let m = start.len();
    let affine: Vec<(Array2<f64>, Array1<f64>)> =
        states.rows().into_iter().map(|x| evaluate_affine(system, &x.to_vec())).collect::<Result<_>>()?;
    let mut alpha = start.to_vec();
    for _ in 0..100 {
        let mut jtj = vec![Sum::default(); m * m];
        let mut jtr = vec![Sum::default(); m];
        let a = Array1::from(alpha.clone());
        for ((x, v), (l, b)) in states.rows().into_iter().zip(velocities.rows()).zip(&affine) {
            let (e, de) = pert.evaluate(eps, &x.to_vec(), &alpha);
            let r = l.dot(&a) + b + Array1::from(e) - v;
            let jac = l + &de;
            for i in 0..m {
                for k in 0..m {
                    jtj[i * m + k].add(jac.column(i).dot(&jac.column(k)));
                }
                jtr[i].add(jac.column(i).dot(&r));
            }
        }
        let g = DMatrix::from_fn(m, m, |i, k| jtj[i * m + k].value());
        let rhs = DVector::from_iterator(m, jtr.iter().map(|s| s.value()));
        let step = g.cholesky().ok_or(Error::NonIdentifiable { condition: f64::INFINITY })?.solve(&rhs);
        for (a, s) in alpha.iter_mut().zip(step.iter()) {
            *a -= s;
        }
        let scale = 1.0 + alpha.iter().map(|a| a.abs()).fold(0.0, f64::max);
        if step.amax() <= 1e-15 * scale {
            break;
        }
    }
    Ok(alpha)
}

/// Deviation of the least-squares α when the affine model carries a
/// perturbation of size `ε`, relative to the unperturbed fit.
pub fn perturbed_velocity_sweep(
    system: &dyn DynamicalSystem,
    traj: &Trajectory,
    eps_list: &[f64],
    pert: &Perturbation,
) -> Result<Vec<SweepPoint>> {
    if eps_list.iter().any(|&e| !(e >= 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("perturbation sizes must be non-negative and decreasing"));
    }
    let (base, _) = affine_least_squares(system, traj)?;
    let (states, velocities) = finite_differences(traj.states.view(), traj.dt);
    let reference = perturbed_fit(system, states.view(), velocities.view(), pert, 0.0, &base)?;
    eps_list
        .iter()
        .map(|&eps| {
            let estimate = perturbed_fit(system, states.view(), velocities.view(), pert, eps, &reference)?;
            let errors = estimate.iter().zip(&reference).map(|(a, b)| (a - b).abs()).collect();
            Ok(SweepPoint { value: eps, estimate, errors })
        })
        .collect()
}

/// Sweep as CSV: `<key>,error,error_0,…`.
pub fn sweep_csv(key: &str, points: &[SweepPoint]) -> String {
    let m = points.first().map_or(0, |p| p.errors.len());
    let mut out = format!("{key},error");
    for j in 0..m {
        out.push_str(&format!(",error_{j}"));
    }
    out.push('\n');
    for p in points {
        out.push_str(&format!("{:e},{:e}", p.value, p.error()));
        for e in &p.errors {
            out.push_str(&format!(",{e:e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_sweep_csv(path: &Path, key: &str, points: &[SweepPoint]) -> Result<()> {
    atomic_write(path, sweep_csv(key, points).as_bytes())
}

/// Distance between an estimate and the truth in the max norm.
pub fn estimate_error(estimate: &[f64], truth: &[f64]) -> f64 {
    max_abs_diff(estimate, truth)
}
