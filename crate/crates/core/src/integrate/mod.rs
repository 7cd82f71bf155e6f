//! ODE integration onto a uniform output grid.

mod dopri5;
mod rk4;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::{ParamGrid, TrajectorySet};
use crate::error::{Error, Result};
use crate::par;
use crate::systems::DynamicalSystem;

pub use dopri5::{Dopri5, Dopri5Stepper};
pub use rk4::Rk4;

/// Any state component beyond this magnitude aborts integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

/// Sampled solution `x(t_k)`, `t_k = t0 + k·dt`, for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub system: String,
    pub params: Vec<f64>,
    pub t0: f64,
    pub dt: f64,
    /// One row per time point.
    pub states: Array2<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.states.ncols()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.states.row(k)
    }

    /// Every `factor`-th sample, keeping the first.
    pub fn subsample(&self, factor: usize) -> Trajectory {
        let factor = factor.max(1);
        let rows: Vec<usize> = (0..self.len()).step_by(factor).collect();
        let states = self.states.select(ndarray::Axis(0), &rows);
        Trajectory { system: self.system.clone(), params: self.params.clone(), t0: self.t0, dt: self.dt * factor as f64, states }
    }

    /// One channel as a plain series.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.states.column(c).to_vec()
    }
}

/// A time-stepping scheme that fills a uniform output grid.
pub trait Integrator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Fills `out` (shape `(steps + 1) × n`) with `x(k·dt)` for `k = 0..=steps`.
    fn solve(
        &self,
        system: &dyn DynamicalSystem,
        alpha: &[f64],
        x0: &[f64],
        dt: f64,
        out: &mut Array2<f64>,
    ) -> Result<()>;
}

/// Integration scheme selectable by name (`rk4`, `dopri5`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Rk4 { substeps: usize },
    Dopri5 { rtol: f64, atol: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Dopri5 { rtol: 1e-9, atol: 1e-9 }
    }
}

impl Method {
    pub fn dopri5(tol: f64) -> Self {
        Method::Dopri5 { rtol: tol, atol: tol }
    }

    pub fn integrator(&self) -> Box<dyn Integrator> {
        match *self {
            Method::Rk4 { substeps } => Box::new(Rk4::new(substeps)),
            Method::Dopri5 { rtol, atol } => Box::new(Dopri5::new(rtol, atol)),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4 { substeps: rk4::DEFAULT_SUBSTEPS }),
            "dopri5" => Ok(Method::default()),
            other => Err(Error::UnknownName { kind: "integration method", name: other.to_string() }),
        }
    }
}

/// Number of grid intervals `⌊t_end / dt⌋`, tolerant of representation error.
pub fn grid_steps(t_end: f64, dt: f64) -> usize {
    (t_end / dt + 1e-9).floor() as usize
}

pub(crate) fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite() && v.abs() <= BLOW_UP_THRESHOLD) {
        Ok(())
    } else {
        Err(Error::BlowUp { last_valid_time: t })
    }
}

/// Integrates `system` at `alpha` from `x0` over `[0, t_end]`, sampled every `dt`.
pub fn integrate(
    system: &dyn DynamicalSystem,
    alpha: &[f64],
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: &Method,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end >= dt) {
        return Err(Error::arg(format!("t_end must be at least dt, got t_end={t_end}, dt={dt}")));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::shape(format!("x0 has {} components, system expects {}", x0.len(), system.state_dim())));
    }
    if alpha.len() != system.param_dim() {
        return Err(Error::shape(format!("α has {} components, system expects {}", alpha.len(), system.param_dim())));
    }
    if !x0.iter().chain(alpha).all(|v| v.is_finite()) {
        return Err(Error::arg("x0 and α must be finite"));
    }
    let steps = grid_steps(t_end, dt);
    let mut states = Array2::zeros((steps + 1, system.state_dim()));
    method.integrator().solve(system, alpha, x0, dt, &mut states)?;
    Ok(Trajectory { system: system.name().to_string(), params: alpha.to_vec(), t0: 0.0, dt, states })
}

/// Result of integrating every point of a parameter grid.
#[derive(Debug)]
pub struct BatchOutcome {
    /// Successful trajectories, in grid order.
    pub set: TrajectorySet,
    /// Grid index and error of every point that failed.
    pub failures: Vec<(usize, Vec<f64>, Error)>,
}

/// Integrates one trajectory per grid point. Individual failures are recorded
/// without aborting the batch.
pub fn batch_integrate(
    system: &dyn DynamicalSystem,
    grid: &ParamGrid,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: &Method,
    jobs: usize,
) -> Result<BatchOutcome> {
    let points = grid.points()?;
    integrate_points(system, &points, x0, t_end, dt, method, jobs)
}

/// As [`batch_integrate`] over an explicit list of parameter vectors.
pub fn integrate_points(
    system: &dyn DynamicalSystem,
    points: &[Vec<f64>],
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: &Method,
    jobs: usize,
) -> Result<BatchOutcome> {
    if points.is_empty() {
        return Err(Error::arg("parameter grid is empty"));
    }
    let results = par::map_ordered(points, jobs, |_, alpha| integrate(system, alpha, x0, t_end, dt, method));
    let mut set = TrajectorySet::new(system.name(), dt, system.state_dim(), system.param_labels());
    let mut failures = Vec::new();
    for (i, (alpha, r)) in points.iter().zip(results).enumerate() {
        match r {
            Ok(traj) => set.trajectories.push(traj),
            Err(e) => failures.push((i, alpha.clone(), e)),
        }
    }
    Ok(BatchOutcome { set, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{lorenz, lotka_volterra, LotkaVolterra, ParamBox};

    /// dx/dt = -k x on a scalar state.
    #[derive(Debug)]
    pub(crate) struct Decay {
        bounds: ParamBox,
    }

    impl Decay {
        pub(crate) fn new() -> Self {
            Self { bounds: ParamBox::new(vec![(0.0, 2.0)]).unwrap() }
        }
    }

    impl DynamicalSystem for Decay {
        fn name(&self) -> &str {
            "decay"
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn param_box(&self) -> &ParamBox {
            &self.bounds
        }
        fn param_labels(&self) -> Vec<String> {
            vec!["k".into()]
        }
        fn velocity(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
            out[0] = -p[0] * x[0];
        }
        fn default_x0(&self) -> Vec<f64> {
            vec![1.0]
        }
    }

    #[test]
    fn exponential_decay_dopri5() {
        let traj = integrate(&Decay::new(), &[1.0], &[1.0], 1.0, 0.01, &Method::dopri5(1e-10)).unwrap();
        assert_eq!(traj.len(), 101);
        let last = traj.states[[100, 0]];
        assert!((last - (-1.0f64).exp()).abs() < 1e-8, "{last}");
        // every grid sample, not only the endpoint
        for k in 0..traj.len() {
            assert!((traj.states[[k, 0]] - (-traj.time(k)).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let err = |substeps: usize| {
            let t = integrate(&Decay::new(), &[1.0], &[1.0], 1.0, 0.1, &Method::Rk4 { substeps }).unwrap();
            (t.states[[10, 0]] - (-1.0f64).exp()).abs()
        };
        for s in [1, 2, 4] {
            let ratio = err(s) / err(2 * s);
            assert!(ratio >= 8.0, "halving step only reduced error by {ratio}");
        }
    }

    #[test]
    fn lorenz_row_count() {
        let sys = lorenz();
        let traj = integrate(&sys, &[10.0, 28.0, 8.0 / 3.0], &sys.default_x0(), 1000.0, 0.01, &Method::default()).unwrap();
        assert_eq!(traj.len(), 100_001);
        assert!(traj.states.iter().all(|v| v.is_finite()));
        assert_eq!(traj.time(100_000), 1000.0);
    }

    #[test]
    fn lotka_volterra_first_integral() {
        let p = [1.0, 1.0, 1.0, 1.0];
        let traj = integrate(&lotka_volterra(), &p, &[3.0, 3.0], 100.0, 0.01, &Method::dopri5(1e-10)).unwrap();
        let h0 = LotkaVolterra::conserved_quantity(traj.row(0).as_slice().unwrap(), &p);
        let drift = traj
            .states
            .rows()
            .into_iter()
            .map(|r| (LotkaVolterra::conserved_quantity(r.as_slice().unwrap(), &p) - h0).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-6, "drift {drift}");
    }

    #[test]
    fn argument_errors() {
        let sys = Decay::new();
        assert!(matches!(integrate(&sys, &[1.0], &[1.0], 1.0, 0.0, &Method::default()), Err(Error::InvalidArgument(_))));
        assert!(matches!(integrate(&sys, &[1.0], &[1.0], 0.001, 0.01, &Method::default()), Err(Error::InvalidArgument(_))));
        assert!(matches!(integrate(&sys, &[1.0], &[1.0, 2.0], 1.0, 0.1, &Method::default()), Err(Error::Shape(_))));
        assert!(matches!(integrate(&sys, &[1.0], &[f64::NAN], 1.0, 0.1, &Method::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn blow_up_reports_last_valid_time() {
        // growth rate 40 reaches 1e8 near t = ln(1e8)/40 ≈ 0.46
        let err = integrate(&Decay::new(), &[-40.0], &[1.0], 1.0, 0.01, &Method::default()).unwrap_err();
        match err {
            Error::BlowUp { last_valid_time } => assert!(last_valid_time > 0.3 && last_valid_time < 0.47, "{last_valid_time}"),
            other => panic!("unexpected {other:?}"),
        }
        let err = integrate(&Decay::new(), &[-40.0], &[1.0], 1.0, 0.01, &Method::Rk4 { substeps: 4 }).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn restart_from_midpoint_reproduces_second_half() {
        let tol = 1e-10;
        let method = Method::dopri5(tol);
        // non-chaotic: LV over a long horizon
        let p = [1.1, 0.8, 0.9, 1.2];
        let full = integrate(&lotka_volterra(), &p, &[3.0, 3.0], 20.0, 0.01, &method).unwrap();
        let mid = full.row(1000).to_vec();
        let second = integrate(&lotka_volterra(), &p, &mid, 10.0, 0.01, &method).unwrap();
        for k in 0..second.len() {
            for c in 0..2 {
                assert!((second.states[[k, c]] - full.states[[1000 + k, c]]).abs() <= 100.0 * tol * 10.0);
            }
        }
        // chaotic: Lorenz only over t ≤ 1
        let sys = lorenz();
        let a = [10.0, 28.0, 8.0 / 3.0];
        let full = integrate(&sys, &a, &sys.default_x0(), 1.0, 0.01, &method).unwrap();
        let mid = full.row(50).to_vec();
        let second = integrate(&sys, &a, &mid, 0.5, 0.01, &method).unwrap();
        for k in 0..second.len() {
            for c in 0..3 {
                let scale = 1.0 + full.states[[50 + k, c]].abs();
                assert!((second.states[[k, c]] - full.states[[50 + k, c]]).abs() <= 100.0 * tol * scale);
            }
        }
    }

    #[test]
    fn batch_counts_and_singleton_consistency() {
        use crate::dataset::{Axis, ParamGrid};
        let sys = lorenz();
        let grid = ParamGrid::lattice(sys.param_box(), 0.2).unwrap();
        assert_eq!(grid.points().unwrap().len(), 1331);

        let l96 = crate::systems::lorenz96(4).unwrap();
        let g96 = ParamGrid::lattice(l96.param_box(), 0.2).unwrap();
        let out = batch_integrate(&l96, &g96, &l96.default_x0(), 1.0, 0.01, &Method::default(), 2).unwrap();
        assert_eq!(out.set.trajectories.len(), 51);
        assert!(out.failures.is_empty());

        let single = ParamGrid::from_axes(vec![Axis::List(vec![10.0]), Axis::List(vec![28.0]), Axis::List(vec![2.5])]);
        let out = batch_integrate(&sys, &single, &sys.default_x0(), 2.0, 0.01, &Method::default(), 1).unwrap();
        let direct = integrate(&sys, &[10.0, 28.0, 2.5], &sys.default_x0(), 2.0, 0.01, &Method::default()).unwrap();
        assert_eq!(out.set.trajectories, vec![direct]);

        let empty = ParamGrid::from_axes(vec![Axis::List(vec![])]);
        assert!(batch_integrate(&sys, &empty, &sys.default_x0(), 1.0, 0.01, &Method::default(), 1).is_err());
    }

    #[test]
    fn batch_records_failures_without_aborting() {
        use crate::dataset::{Axis, ParamGrid};
        let grid = ParamGrid::from_axes(vec![Axis::List(vec![1.0, -40.0, 0.5])]);
        let out = batch_integrate(&Decay::new(), &grid, &[1.0], 1.0, 0.01, &Method::default(), 1).unwrap();
        assert_eq!(out.set.trajectories.len(), 2);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].0, 1);
    }

    #[test]
    fn method_names() {
        assert!(matches!("rk4".parse::<Method>().unwrap(), Method::Rk4 { .. }));
        assert!(matches!("dopri5".parse::<Method>().unwrap(), Method::Dopri5 { .. }));
        assert!("radau".parse::<Method>().is_err());
    }
}
