use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::ParamBox;

const STEP_TOL: f64 = 1e-9;

/// One parameter axis: a uniform range or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Range { lo: f64, hi: f64, step: f64 },
    List(Vec<f64>),
}

impl Axis {
    /// Axis values in ascending order for ranges, first-occurrence order for
    /// lists, with duplicates removed.
    pub fn values(&self) -> Result<Vec<f64>> {
        match *self {
            Axis::Range { lo, hi, step } => {
                if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || lo >= hi || step <= 0.0 {
                    return Err(Error::arg(format!("invalid axis range lo={lo} hi={hi} step={step}")));
                }
                let span = hi - lo;
                if step > span * (1.0 + STEP_TOL) {
                    return Err(Error::arg(format!("step {step} exceeds axis range {span}")));
                }
                let n = (span / step).round();
                if (n * step - span).abs() > STEP_TOL * span.max(1.0) {
                    return Err(Error::arg(format!("step {step} does not divide axis range [{lo}, {hi}]")));
                }
                let n = n as usize;
                Ok((0..=n).map(|k| if k == n { hi } else { (lo + span * k as f64 / n as f64).min(hi) }).collect())
            }
            Axis::List(ref vals) => {
                if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
                    return Err(Error::arg(format!("non-finite axis value {v}")));
                }
                let mut out: Vec<f64> = Vec::with_capacity(vals.len());
                for &v in vals {
                    if !out.iter().any(|&u| u == v) {
                        out.push(v);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exclusion {
    #[default]
    None,
    /// Drops lattice points whose index sum is even.
    Checkerboard,
}

impl Exclusion {
    fn excludes(self, index: &[usize]) -> bool {
        match self {
            Exclusion::None => false,
            Exclusion::Checkerboard => index.iter().sum::<usize>() % 2 == 0,
        }
    }
}

/// Cartesian product of axes, optionally masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub exclusion: Exclusion,
    /// Seed for randomly sampled companion sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ParamGrid {
    pub fn from_axes(axes: Vec<Axis>) -> Self {
        Self { axes, exclusion: Exclusion::None, seed: None }
    }

    /// Lattice covering `bounds` at spacing `step` on every axis.
    pub fn lattice(bounds: &ParamBox, step: f64) -> Result<Self> {
        let grid = Self::from_axes(bounds.bounds().iter().map(|&(lo, hi)| Axis::Range { lo, hi, step }).collect());
        for axis in &grid.axes {
            axis.values()?;
        }
        Ok(grid)
    }

    pub fn with_exclusion(mut self, exclusion: Exclusion) -> Self {
        self.exclusion = exclusion;
        self
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn walk(&self, mut visit: impl FnMut(&[usize], &[f64])) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::arg("parameter grid has no axes"));
        }
        let values = self.axes.iter().map(Axis::values).collect::<Result<Vec<_>>>()?;
        if values.iter().any(Vec::is_empty) {
            return Ok(());
        }
        let mut index = vec![0usize; values.len()];
        let mut point = vec![0.0; values.len()];
        loop {
            for (a, &i) in index.iter().enumerate() {
                point[a] = values[a][i];
            }
            visit(&index, &point);
            let mut a = values.len();
            loop {
                if a == 0 {
                    return Ok(());
                }
                a -= 1;
                index[a] += 1;
                if index[a] < values[a].len() {
                    break;
                }
                index[a] = 0;
            }
        }
    }

    /// Retained grid points, first axis varying slowest.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        self.walk(|idx, p| {
            if !self.exclusion.excludes(idx) {
                out.push(p.to_vec());
            }
        })?;
        Ok(out)
    }

    /// Lattice points removed by the exclusion mask.
    pub fn excluded_points(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        self.walk(|idx, p| {
            if self.exclusion.excludes(idx) {
                out.push(p.to_vec());
            }
        })?;
        Ok(out)
    }
}

/// `n` points drawn uniformly from `bounds` by a seeded generator.
pub fn sample_uniform(bounds: &ParamBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| bounds.bounds().iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect())
        .collect()
}

/// Training lattice at `train_step` plus `n_test` uniformly sampled test parameters.
pub fn train_test_grids(bounds: &ParamBox, train_step: f64, n_test: usize, seed: u64) -> Result<(ParamGrid, Vec<Vec<f64>>)> {
    if n_test == 0 {
        return Err(Error::arg("n_test must be ≥ 1"));
    }
    let mut grid = ParamGrid::lattice(bounds, train_step)?;
    grid.seed = Some(seed);
    Ok((grid, sample_uniform(bounds, n_test, seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{lorenz, DynamicalSystem};

    #[test]
    fn lorenz_lattice_and_test_set() {
        let sys = lorenz();
        let (grid, test) = train_test_grids(sys.param_box(), 0.2, 1000, 7).unwrap();
        let pts = grid.points().unwrap();
        assert_eq!(pts.len(), 1331);
        assert_eq!(test.len(), 1000);
        assert!(pts.iter().chain(&test).all(|p| sys.param_box().contains(p)));
        assert_eq!(train_test_grids(sys.param_box(), 0.2, 1000, 7).unwrap().1, test);
        assert_ne!(train_test_grids(sys.param_box(), 0.2, 1000, 8).unwrap().1, test);
        assert_eq!(ParamGrid::lattice(sys.param_box(), 0.5).unwrap().points().unwrap().len(), 125);
    }

    #[test]
    fn step_equal_to_range_gives_endpoints() {
        let b = ParamBox::new(vec![(1.0, 2.0), (0.5, 1.5)]).unwrap();
        let pts = ParamGrid::lattice(&b, 1.0).unwrap().points().unwrap();
        assert_eq!(pts, vec![vec![1.0, 0.5], vec![1.0, 1.5], vec![2.0, 0.5], vec![2.0, 1.5]]);
    }

    #[test]
    fn axis_errors() {
        let b = ParamBox::new(vec![(0.0, 1.0)]).unwrap();
        assert!(ParamGrid::lattice(&b, 1.5).is_err());
        assert!(ParamGrid::lattice(&b, 0.3).is_err());
        assert!(ParamGrid::lattice(&b, 0.0).is_err());
        assert!(Axis::List(vec![f64::NAN]).values().is_err());
        assert!(train_test_grids(&b, 0.5, 0, 1).is_err());
        assert!(ParamGrid::from_axes(vec![]).points().is_err());
    }

    #[test]
    fn lists_are_deduplicated() {
        let g = ParamGrid::from_axes(vec![Axis::List(vec![1.0, 2.0, 1.0]), Axis::List(vec![3.0, 3.0])]);
        assert_eq!(g.points().unwrap(), vec![vec![1.0, 3.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn checkerboard_halves_the_lattice() {
        for (a, b) in [(3usize, 3usize), (4, 5), (2, 2), (1, 7)] {
            let g = ParamGrid::from_axes(vec![
                Axis::List((0..a).map(|i| i as f64).collect()),
                Axis::List((0..b).map(|i| i as f64).collect()),
            ])
            .with_exclusion(Exclusion::Checkerboard);
            let kept = g.points().unwrap();
            let dropped = g.excluded_points().unwrap();
            let n = a * b;
            assert!(dropped.len() == n / 2 || dropped.len() == n.div_ceil(2));
            assert_eq!(kept.len() + dropped.len(), n);
            assert!(dropped.iter().all(|p| !kept.contains(p)));
        }
    }

    #[test]
    fn json_schema() {
        let g: ParamGrid = serde_json::from_str(
            r#"{"axes": [{"lo": 0.0, "hi": 1.0, "step": 0.5}, [2.0, 3.0]], "exclusion": "checkerboard", "seed": 4}"#,
        )
        .unwrap();
        assert_eq!(g.exclusion, Exclusion::Checkerboard);
        assert_eq!(g.seed, Some(4));
        assert_eq!(g.points().unwrap().len(), 3);
        let back: ParamGrid = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
