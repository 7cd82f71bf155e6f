use ndarray::{s, Array1, Array2, ArrayView2, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use super::TrajectorySet;
use crate::error::{Error, Result};

/// Per-column affine map `z = (v − shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ColumnTransform {
    pub fn identity(width: usize) -> Self {
        Self { shift: vec![0.0; width], scale: vec![1.0; width] }
    }

    /// Mean and population deviation per column; constant columns get unit scale.
    pub fn fit(data: ArrayView2<f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        let mut shift = Vec::with_capacity(data.ncols());
        let mut scale = Vec::with_capacity(data.ncols());
        for col in data.columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            shift.push(mean);
            scale.push(if sd > 1e-12 * mean.abs().max(1e-300) && sd.is_finite() { sd } else { 1.0 });
        }
        Self { shift, scale }
    }

    pub fn width(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, data: &mut Array2<f64>) {
        for mut row in data.rows_mut() {
            self.apply_row(row.as_slice_mut().expect("standard layout"));
        }
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, data: &mut Array2<f64>) {
        for mut row in data.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = *v * s + m;
            }
        }
    }

    /// A sub-range of the columns.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self { shift: self.shift[from..to].to_vec(), scale: self.scale[from..to].to_vec() }
    }
}

/// Statistics for the input columns `(state, α)` and the target columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub inputs: ColumnTransform,
    pub targets: ColumnTransform,
}

/// Pooled `(state, α) → velocity` training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    /// `P × (D + m)`, normalized when `normalization` is set.
    pub inputs: Array2<f64>,
    /// `P × D`, normalized when `normalization` is set.
    pub targets: Array2<f64>,
    pub normalization: Option<Normalization>,
    pub dt: f64,
    pub state_dim: usize,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn param_dim(&self) -> usize {
        self.inputs.ncols() - self.state_dim
    }

    /// Inputs and targets in raw units.
    pub fn denormalized(&self) -> (Array2<f64>, Array2<f64>) {
        let (mut x, mut y) = (self.inputs.clone(), self.targets.clone());
        if let Some(n) = &self.normalization {
            n.inputs.invert(&mut x);
            n.targets.invert(&mut y);
        }
        (x, y)
    }
}

/// Forward differences of a state sequence: rows `0..N−1` and
/// `(x_{k+1} − x_k) / dt`.
pub fn finite_differences(states: ArrayView2<f64>, dt: f64) -> (Array2<f64>, Array2<f64>) {
    let n = states.nrows();
    if n < 2 {
        return (Array2::zeros((0, states.ncols())), Array2::zeros((0, states.ncols())));
    }
    let head = states.slice(s![..n - 1, ..]).to_owned();
    let mut diff = states.slice(s![1.., ..]).to_owned();
    diff -= &head;
    diff /= dt;
    (head, diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedOptions {
    pub normalize: bool,
    /// Drop the first 10% of each trajectory.
    pub burn_in: bool,
}

impl Default for SupervisedOptions {
    fn default() -> Self {
        Self { normalize: true, burn_in: false }
    }
}

pub const BURN_IN_FRACTION: f64 = 0.1;

pub fn build_supervised(set: &TrajectorySet, normalize: bool) -> Result<SupervisedSet> {
    build_supervised_with(set, SupervisedOptions { normalize, burn_in: false })
}

pub fn build_supervised_with(set: &TrajectorySet, opts: SupervisedOptions) -> Result<SupervisedSet> {
    if set.is_empty() {
        return Err(Error::arg("trajectory set is empty"));
    }
    set.validate()?;
    let d = set.width;
    let m = set.param_dim();
    let mut parts_x = Vec::with_capacity(set.len());
    let mut parts_y = Vec::with_capacity(set.len());
    for (i, t) in set.trajectories.iter().enumerate() {
        let skip = if opts.burn_in { (t.len() as f64 * BURN_IN_FRACTION).floor() as usize } else { 0 };
        if t.len() < skip + 2 {
            return Err(Error::InsufficientLength { needed: skip + 2, available: t.len() });
        }
        let (head, diff) = finite_differences(t.states.slice(s![skip.., ..]), set.dt);
        let mut x = Array2::zeros((head.nrows(), d + m));
        x.slice_mut(s![.., ..d]).assign(&head);
        x.slice_mut(s![.., d..]).assign(&Array1::from(t.params.clone()));
        parts_x.push(x);
        parts_y.push(diff);
        log::trace!("trajectory {i}: {} pairs", head.nrows());
    }
    let views_x: Vec<_> = parts_x.iter().map(|a| a.view()).collect();
    let views_y: Vec<_> = parts_y.iter().map(|a| a.view()).collect();
    let mut inputs = ndarray::concatenate(NdAxis(0), &views_x).map_err(|e| Error::shape(e.to_string()))?;
    let mut targets = ndarray::concatenate(NdAxis(0), &views_y).map_err(|e| Error::shape(e.to_string()))?;
    let normalization = opts.normalize.then(|| {
        let n = Normalization { inputs: ColumnTransform::fit(inputs.view()), targets: ColumnTransform::fit(targets.view()) };
        n.inputs.apply(&mut inputs);
        n.targets.apply(&mut targets);
        n
    });
    Ok(SupervisedSet { inputs, targets, normalization, dt: set.dt, state_dim: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, Method, Trajectory};
    use crate::systems::{lorenz, velocity_of, DynamicalSystem};
    use ndarray::arr2;

    fn set_of(trajs: Vec<Trajectory>) -> TrajectorySet {
        let mut set = TrajectorySet::new("toy", trajs[0].dt, trajs[0].width(), vec!["a".into()]);
        for t in trajs {
            set.push(t).unwrap();
        }
        set
    }

    fn linear(v: [f64; 2], n: usize, dt: f64, alpha: f64) -> Trajectory {
        Trajectory {
            system: "toy".into(),
            params: vec![alpha],
            t0: 0.0,
            dt,
            states: Array2::from_shape_fn((n, 2), |(k, c)| k as f64 * dt * v[c]),
        }
    }

    #[test]
    fn pair_counts_and_exact_linear_targets() {
        let s = build_supervised(&set_of(vec![linear([1.0, 2.0], 3, 0.5, 0.1)]), false).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.input_dim(), 3);
        assert_eq!(s.param_dim(), 1);
        let v = [3.0, -1.5];
        let dt = 0.25;
        let s = build_supervised(&set_of(vec![linear(v, 40, dt, 0.3)]), false).unwrap();
        for row in s.targets.rows() {
            assert!((row[0] - v[0]).abs() < 1e-12 && (row[1] - v[1]).abs() < 1e-12);
        }
        assert!(s.inputs.column(2).iter().all(|&a| a == 0.3));
    }

    #[test]
    fn lorenz_first_target_is_close_to_velocity() {
        let sys = lorenz();
        let a = [10.0, 28.0, 8.0 / 3.0];
        let x0 = sys.default_x0();
        let t = integrate(&sys, &a, &x0, 1.0, 0.01, &Method::default()).unwrap();
        let mut set = TrajectorySet::new(sys.name(), 0.01, 3, sys.param_labels());
        set.push(t).unwrap();
        let s = build_supervised(&set, false).unwrap();
        let f = velocity_of(&sys, &x0, &a);
        assert_eq!(f, vec![10.0, -1.0, -2.8]);
        // forward difference = F + (dt/2)·J·F + O(dt²)
        let (x, y, z) = (x0[0], x0[1], x0[2]);
        let jac = [[-a[0], a[0], 0.0], [a[1] - z, -1.0, -x], [y, x, -a[2]]];
        for c in 0..3 {
            let jf: f64 = (0..3).map(|j| jac[c][j] * f[j]).sum();
            let predicted = f[c] + 0.005 * jf;
            assert!((s.targets[[0, c]] - predicted).abs() <= 0.1, "channel {c}: {} vs {predicted}", s.targets[[0, c]]);
        }
        assert!((s.targets[[0, 1]] - 0.3037073).abs() < 1e-5);
    }

    #[test]
    fn normalization_round_trips() {
        let trajs = vec![linear([1.0, 2.0], 20, 0.1, 0.5), linear([-4.0, 0.5], 30, 0.1, 1.5)];
        let set = set_of(trajs);
        let raw = build_supervised(&set, false).unwrap();
        let norm = build_supervised(&set, true).unwrap();
        let n = norm.normalization.as_ref().unwrap();
        assert!(n.inputs.scale.iter().chain(&n.targets.scale).all(|&s| s > 0.0));
        let (x, y) = norm.denormalized();
        for (a, b) in x.iter().zip(raw.inputs.iter()).chain(y.iter().zip(raw.targets.iter())) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
        for col in norm.inputs.columns() {
            assert!(col.mean().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn shuffling_members_permutes_rows_only() {
        let a = linear([1.0, 2.0], 5, 0.1, 0.5);
        let b = linear([-2.0, 1.0], 7, 0.1, 1.0);
        let s1 = build_supervised(&set_of(vec![a.clone(), b.clone()]), false).unwrap();
        let s2 = build_supervised(&set_of(vec![b, a]), false).unwrap();
        let key = |s: &SupervisedSet| {
            let mut rows: Vec<Vec<u64>> = s
                .inputs
                .rows()
                .into_iter()
                .zip(s.targets.rows())
                .map(|(x, y)| x.iter().chain(y.iter()).map(|v| v.to_bits()).collect())
                .collect();
            rows.sort();
            rows
        };
        assert_eq!(key(&s1), key(&s2));
    }

    #[test]
    fn burn_in_and_errors() {
        let set = set_of(vec![linear([1.0, 1.0], 50, 0.1, 0.5)]);
        let s = build_supervised_with(&set, SupervisedOptions { normalize: false, burn_in: true }).unwrap();
        assert_eq!(s.len(), 44);
        let empty = TrajectorySet::new("toy", 0.1, 2, vec!["a".into()]);
        assert!(build_supervised(&empty, true).is_err());
        let short = set_of(vec![linear([1.0, 1.0], 1, 0.1, 0.5)]);
        assert!(matches!(build_supervised(&short, true), Err(Error::InsufficientLength { .. })));
    }

    #[test]
    fn finite_difference_helper() {
        let (h, d) = finite_differences(arr2(&[[0.0], [1.0], [4.0]]).view(), 0.5);
        assert_eq!(h, arr2(&[[0.0], [1.0]]));
        assert_eq!(d, arr2(&[[2.0], [6.0]]));
    }
}
