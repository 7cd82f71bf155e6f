//! Delay-coordinate embeddings, minimum-embedding-dimension estimators and
//! delay selection.

mod delay;
mod dimension;
pub mod kdtree;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;

pub use delay::{autocorrelation, select_delay_autocorr};
pub use dimension::{
    cao_curve, estimate_min_dimension, fnn_fractions, min_embedding_dim_cao, min_embedding_dim_fnn, CaoCurve, CaoEstimator,
    DimensionEstimate, DimensionEstimator, EstimatorRegistry, KennelEstimator, CAO_THRESHOLD, KENNEL_ATOL,
    KENNEL_RTOL,
};

/// Delay `τ` (in samples), number of copies `d`, and source channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub delay_steps: usize,
    pub dim: usize,
    pub channels: Vec<usize>,
}

impl EmbeddingSpec {
    pub fn new(delay_steps: usize, dim: usize, channels: Vec<usize>) -> Result<Self> {
        let spec = Self { delay_steps, dim, channels };
        spec.validate()?;
        Ok(spec)
    }

    /// Scalar embedding of one channel.
    pub fn scalar(channel: usize, delay_steps: usize, dim: usize) -> Result<Self> {
        Self::new(delay_steps, dim, vec![channel])
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_steps == 0 || self.dim == 0 {
            return Err(Error::arg(format!("delay and dimension must be ≥ 1, got τ={} d={}", self.delay_steps, self.dim)));
        }
        if self.channels.is_empty() {
            return Err(Error::arg("embedding needs at least one channel"));
        }
        Ok(())
    }

    /// Width of an embedded row, `d × |channels|`.
    pub fn embedded_dim(&self) -> usize {
        self.dim * self.channels.len()
    }

    /// Samples lost at the start, `(d − 1)·τ`.
    pub fn lost_rows(&self) -> usize {
        (self.dim - 1) * self.delay_steps
    }
}

/// A trajectory re-expressed in delay coordinates. Row `k` is
/// `(u(t_k), u(t_{k−τ}), …, u(t_{k−(d−1)τ}))`, timestamped with `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    pub spec: EmbeddingSpec,
    pub trajectory: Trajectory,
}

impl EmbeddedTrajectory {
    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }
}

/// Builds the delay-coordinate trajectory. Block 0 holds the current sample,
/// block `j` the sample lagged by `j·τ`.
pub fn delay_embed(traj: &Trajectory, spec: &EmbeddingSpec) -> Result<EmbeddedTrajectory> {
    spec.validate()?;
    if let Some(&c) = spec.channels.iter().find(|&&c| c >= traj.width()) {
        return Err(Error::arg(format!("channel {c} out of range for {}-dimensional state", traj.width())));
    }
    let lost = spec.lost_rows();
    if traj.len() <= lost {
        return Err(Error::InsufficientLength { needed: lost + 1, available: traj.len() });
    }
    let rows = traj.len() - lost;
    let nc = spec.channels.len();
    let mut states = Array2::zeros((rows, spec.embedded_dim()));
    for (r, mut out) in states.rows_mut().into_iter().enumerate() {
        let k = r + lost;
        for j in 0..spec.dim {
            let src = traj.states.row(k - j * spec.delay_steps);
            for (ci, &c) in spec.channels.iter().enumerate() {
                out[j * nc + ci] = src[c];
            }
        }
    }
    Ok(EmbeddedTrajectory {
        spec: spec.clone(),
        trajectory: Trajectory {
            system: traj.system.clone(),
            params: traj.params.clone(),
            t0: traj.time(lost),
            dt: traj.dt,
            states,
        },
    })
}

/// Spaced delays of the full state: `copies` blocks of every channel, `τ` apart.
pub fn spaced_delay_state(traj: &Trajectory, delay_steps: usize, copies: usize) -> Result<EmbeddedTrajectory> {
    delay_embed(traj, &EmbeddingSpec::new(delay_steps, copies, (0..traj.width()).collect())?)
}

/// Embeds a bare series (as a one-channel trajectory with unit spacing).
pub fn embed_series(series: &[f64], delay_steps: usize, dim: usize) -> Result<Array2<f64>> {
    let traj = series_trajectory(series);
    Ok(delay_embed(&traj, &EmbeddingSpec::scalar(0, delay_steps, dim)?)?.trajectory.states)
}

pub(crate) fn series_trajectory(series: &[f64]) -> Trajectory {
    Trajectory {
        system: String::new(),
        params: Vec::new(),
        t0: 0.0,
        dt: 1.0,
        states: Array2::from_shape_vec((series.len(), 1), series.to_vec()).expect("column"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, Method};
    use crate::systems::{double_pendulum, lorenz, DynamicalSystem};
    use proptest::prelude::*;

    fn ramp(n: usize) -> Trajectory {
        series_trajectory(&(0..n).map(|k| k as f64).collect::<Vec<_>>())
    }

    #[test]
    fn hand_enumerated_lags() {
        let e = delay_embed(&ramp(6), &EmbeddingSpec::scalar(0, 2, 2).unwrap()).unwrap();
        assert_eq!(e.trajectory.states, ndarray::arr2(&[[2.0, 0.0], [3.0, 1.0], [4.0, 2.0], [5.0, 3.0]]));
        assert_eq!(e.trajectory.t0, 2.0);
    }

    #[test]
    fn constant_series_stays_constant() {
        let t = series_trajectory(&[4.5; 30]);
        for (tau, d) in [(1, 1), (3, 4), (7, 2)] {
            let e = delay_embed(&t, &EmbeddingSpec::scalar(0, tau, d).unwrap()).unwrap();
            assert!(e.trajectory.states.iter().all(|&v| v == 4.5));
        }
    }

    #[test]
    fn unit_dimension_is_identity() {
        let sys = lorenz();
        let traj = integrate(&sys, &[10.0, 28.0, 8.0 / 3.0], &sys.default_x0(), 1.0, 0.01, &Method::default()).unwrap();
        let e = delay_embed(&traj, &EmbeddingSpec::new(5, 1, vec![0, 1, 2]).unwrap()).unwrap();
        assert_eq!(e.trajectory, traj);
        assert_eq!(spaced_delay_state(&traj, 9, 1).unwrap().trajectory, traj);
    }

    #[test]
    fn errors() {
        let short = ramp(5);
        assert_eq!(delay_embed(&short, &EmbeddingSpec::scalar(0, 2, 3).unwrap()).unwrap().trajectory.len(), 1);
        assert!(matches!(
            delay_embed(&short, &EmbeddingSpec::scalar(0, 2, 4).unwrap()),
            Err(Error::InsufficientLength { needed: 7, available: 5 })
        ));
        assert!(delay_embed(&short, &EmbeddingSpec { delay_steps: 1, dim: 1, channels: vec![1] }).is_err());
        assert!(EmbeddingSpec::new(0, 2, vec![0]).is_err());
        assert!(EmbeddingSpec::new(1, 0, vec![0]).is_err());
    }

    #[test]
    fn spaced_full_state_layout() {
        let sys = lorenz();
        let traj = integrate(&sys, &[10.0, 28.0, 8.0 / 3.0], &sys.default_x0(), 2.0, 0.01, &Method::default()).unwrap();
        let e = spaced_delay_state(&traj, 16, 2).unwrap();
        assert_eq!(e.trajectory.width(), 6);
        assert_eq!(e.trajectory.len(), traj.len() - 16);
        for r in [0, 17, 100] {
            let k = r + 16;
            let row = e.trajectory.states.row(r);
            for c in 0..3 {
                assert_eq!(row[c], traj.states[[k, c]]);
                assert_eq!(row[3 + c], traj.states[[k - 16, c]]);
            }
        }

        let dp = double_pendulum();
        let traj = integrate(&dp, &[1.5, 1.5], &dp.default_x0(), 0.25, 1e-4, &Method::default()).unwrap();
        assert_eq!(spaced_delay_state(&traj, 1000, 3).unwrap().trajectory.width(), 12);
    }

    proptest! {
        #[test]
        fn block_zero_recovers_truncated_source(
            series in prop::collection::vec(-1e3f64..1e3, 10..80),
            tau in 1usize..4,
            d in 1usize..4,
        ) {
            prop_assume!(series.len() > (d - 1) * tau);
            let e = embed_series(&series, tau, d).unwrap();
            let lost = (d - 1) * tau;
            prop_assert_eq!(e.nrows(), series.len() - lost);
            let block0: Vec<f64> = e.column(0).to_vec();
            prop_assert_eq!(&block0[..], &series[lost..]);
        }
    }
}
