use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::Serialize;

use super::kdtree::{KdTree, Metric};
use crate::error::{Error, Result};

pub const CAO_THRESHOLD: f64 = 0.05;
pub const KENNEL_RTOL: f64 = 15.0;
pub const KENNEL_ATOL: f64 = 2.0;
const FNN_FRACTION: f64 = 0.01;
/// Neighbours closer than this multiple of the series deviation count as coincident.
const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DimensionEstimate {
    pub dim: usize,
    pub saturated: bool,
}

/// Cao's `E1(d)` and `E2(d)` for `d = 1..=d_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaoCurve {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

fn check_series(series: &[f64], tau: usize, d_max: usize, extra: usize) -> Result<f64> {
    if tau == 0 {
        return Err(Error::arg("delay must be ≥ 1"));
    }
    if d_max < 2 {
        return Err(Error::arg(format!("d_max must be ≥ 2, got {d_max}")));
    }
    let needed = (d_max + extra) * tau + 2;
    if series.len() < needed {
        return Err(Error::InsufficientLength { needed, available: series.len() });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let sd = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 1e-12 * mean.abs()) || sd == 0.0 || !sd.is_finite() {
        return Err(Error::DegenerateSeries("series has zero variance".into()));
    }
    Ok(sd)
}

/// Row-major forward-lag delay vectors `(x[i], x[i+τ], …, x[i+(d−1)τ])` for
/// `i = 0..n − d·τ`, leaving room for the next coordinate `x[i+d·τ]`.
fn delay_vectors(series: &[f64], tau: usize, d: usize) -> Vec<f64> {
    let count = series.len() - d * tau;
    let mut out = Vec::with_capacity(count * d);
    for i in 0..count {
        out.extend((0..d).map(|j| series[i + j * tau]));
    }
    out
}

/// For each point valid in the `(d+1)`-embedding, its nearest neighbour in
/// the `d`-embedding outside the Theiler window `τ`, as `(i, j, distance)`.
fn neighbours(series: &[f64], tau: usize, d: usize, metric: Metric, floor: f64) -> Vec<(usize, usize, f64)> {
    let pts = delay_vectors(series, tau, d);
    let tree = KdTree::new(&pts, d);
    (0..tree.len())
        .filter_map(|i| tree.nearest(tree.point(i), metric, floor, |j| j.abs_diff(i) > tau).map(|(j, dist)| (i, j, dist)))
        .collect()
}

/// Cao's averaged neighbour-distance ratios.
pub fn cao_curve(series: &[f64], tau: usize, d_max: usize) -> Result<CaoCurve> {
    let sd = check_series(series, tau, d_max, 1)?;
    let floor = COINCIDENT * sd;
    // E(d) and E*(d) for d = 1..=d_max+1
    let mut e = Vec::with_capacity(d_max + 1);
    let mut e_star = Vec::with_capacity(d_max + 1);
    for d in 1..=d_max + 1 {
        let pairs = neighbours(series, tau, d, Metric::Chebyshev, floor);
        if pairs.is_empty() {
            return Err(Error::DegenerateSeries(format!("no admissible neighbours at dimension {d}")));
        }
        let (mut a, mut s) = (0.0, 0.0);
        for &(i, j, r) in &pairs {
            let next = (series[i + d * tau] - series[j + d * tau]).abs();
            a += r.max(next) / r;
            s += next;
        }
        e.push(a / pairs.len() as f64);
        e_star.push(s / pairs.len() as f64);
    }
    Ok(CaoCurve {
        e1: e.windows(2).map(|w| w[1] / w[0]).collect(),
        e2: e_star.windows(2).map(|w| w[1] / w[0]).collect(),
    })
}

/// Smallest `d` with `|E1(d) − 1|` and `|E1(d+1) − 1|` both below
/// `threshold`; `d_max` with the saturation flag otherwise.
pub fn min_embedding_dim_cao(series: &[f64], tau: usize, d_max: usize, threshold: f64) -> Result<DimensionEstimate> {
    let curve = cao_curve(series, tau, d_max)?;
    let near = |d: usize| (curve.e1[d - 1] - 1.0).abs() < threshold;
    Ok(match (1..d_max).find(|&d| near(d) && near(d + 1)) {
        Some(dim) => DimensionEstimate { dim, saturated: false },
        None => DimensionEstimate { dim: d_max, saturated: true },
    })
}

/// Fraction of false nearest neighbours at each `d = 1..=d_max`.
pub fn fnn_fractions(series: &[f64], tau: usize, d_max: usize, rtol: f64, atol: f64) -> Result<Vec<f64>> {
    let sd = check_series(series, tau, d_max, 0)?;
    let floor = COINCIDENT * sd;
    (1..=d_max)
        .map(|d| {
            let pairs = neighbours(series, tau, d, Metric::Euclidean, floor);
            if pairs.is_empty() {
                return Err(Error::DegenerateSeries(format!("no admissible neighbours at dimension {d}")));
            }
            let false_count = pairs
                .iter()
                .filter(|&&(i, j, r)| {
                    let next = (series[i + d * tau] - series[j + d * tau]).abs();
                    next / r > rtol || (r * r + next * next).sqrt() / sd > atol
                })
                .count();
            Ok(false_count as f64 / pairs.len() as f64)
        })
        .collect()
}

/// Smallest `d` whose false-neighbour fraction is below 1%.
pub fn min_embedding_dim_fnn(series: &[f64], tau: usize, d_max: usize, rtol: f64, atol: f64) -> Result<DimensionEstimate> {
    let fractions = fnn_fractions(series, tau, d_max, rtol, atol)?;
    Ok(match fractions.iter().position(|&f| f < FNN_FRACTION) {
        Some(k) => DimensionEstimate { dim: k + 1, saturated: false },
        None => DimensionEstimate { dim: d_max, saturated: true },
    })
}

pub trait DimensionEstimator: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn estimate(&self, series: &[f64], tau: usize, d_max: usize) -> Result<DimensionEstimate>;
}

#[derive(Debug, Clone, Copy)]
pub struct CaoEstimator {
    pub threshold: f64,
}

impl Default for CaoEstimator {
    fn default() -> Self {
        Self { threshold: CAO_THRESHOLD }
    }
}

impl DimensionEstimator for CaoEstimator {
    fn name(&self) -> &'static str {
        "cao"
    }

    fn estimate(&self, series: &[f64], tau: usize, d_max: usize) -> Result<DimensionEstimate> {
        min_embedding_dim_cao(series, tau, d_max, self.threshold)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KennelEstimator {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for KennelEstimator {
    fn default() -> Self {
        Self { rtol: KENNEL_RTOL, atol: KENNEL_ATOL }
    }
}

impl DimensionEstimator for KennelEstimator {
    fn name(&self) -> &'static str {
        "kennel"
    }

    fn estimate(&self, series: &[f64], tau: usize, d_max: usize) -> Result<DimensionEstimate> {
        min_embedding_dim_fnn(series, tau, d_max, self.rtol, self.atol)
    }
}

/// Named dimension estimators, run together and combined by taking the largest.
#[derive(Debug)]
pub struct EstimatorRegistry {
    estimators: BTreeMap<&'static str, Box<dyn DimensionEstimator>>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut r = Self { estimators: BTreeMap::new() };
        r.register(Box::new(CaoEstimator::default()));
        r.register(Box::new(KennelEstimator::default()));
        r
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self { estimators: BTreeMap::new() }
    }

    pub fn register(&mut self, estimator: Box<dyn DimensionEstimator>) {
        self.estimators.insert(estimator.name(), estimator);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.estimators.keys().copied().collect()
    }

    /// Runs every estimator; returns per-name results and the combined dimension.
    pub fn estimate_all(
        &self,
        series: &[f64],
        tau: usize,
        d_max: usize,
    ) -> Result<(BTreeMap<&'static str, DimensionEstimate>, usize)> {
        let mut out = BTreeMap::new();
        for (name, est) in &self.estimators {
            out.insert(*name, est.estimate(series, tau, d_max)?);
        }
        let combined = out.values().map(|e| e.dim).max().unwrap_or(0);
        Ok((out, combined))
    }
}

/// Cao and Kennel with default settings, combined by taking the larger.
pub fn estimate_min_dimension(series: &[f64], tau: usize, d_max: usize) -> Result<usize> {
    Ok(EstimatorRegistry::default().estimate_all(series, tau, d_max)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sine() -> Vec<f64> {
        (0..5000).map(|k| (2.0 * std::f64::consts::PI * k as f64 / 100.0).sin()).collect()
    }

    fn noise(n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn sine_is_two_dimensional() {
        let s = sine();
        assert_eq!(min_embedding_dim_cao(&s, 25, 8, CAO_THRESHOLD).unwrap(), DimensionEstimate { dim: 2, saturated: false });
        assert_eq!(
            min_embedding_dim_fnn(&s, 25, 8, KENNEL_RTOL, KENNEL_ATOL).unwrap(),
            DimensionEstimate { dim: 2, saturated: false }
        );
    }

    #[test]
    fn white_noise_saturates() {
        let s = noise(5000);
        assert!(min_embedding_dim_cao(&s, 1, 8, CAO_THRESHOLD).unwrap().saturated);
        assert!(min_embedding_dim_fnn(&s, 1, 8, KENNEL_RTOL, KENNEL_ATOL).unwrap().saturated);
    }

    #[test]
    fn e1_is_affine_invariant() {
        let s: Vec<f64> = (0..3000).map(|k| (k as f64 * 0.05).sin() + 0.4 * (k as f64 * 0.131).cos()).collect();
        let scaled: Vec<f64> = s.iter().map(|v| -3.7 * v + 12.0).collect();
        let a = cao_curve(&s, 7, 6).unwrap();
        let b = cao_curve(&scaled, 7, 6).unwrap();
        for (x, y) in a.e1.iter().zip(&b.e1) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn deterministic_and_errors() {
        let s = noise(1200);
        assert_eq!(cao_curve(&s, 2, 5).unwrap(), cao_curve(&s, 2, 5).unwrap());
        assert!(matches!(cao_curve(&[1.0; 500], 1, 4), Err(Error::DegenerateSeries(_))));
        assert!(matches!(fnn_fractions(&[1.0; 500], 1, 4, 15.0, 2.0), Err(Error::DegenerateSeries(_))));
        assert!(matches!(cao_curve(&s[..20], 5, 4), Err(Error::InsufficientLength { .. })));
        assert!(cao_curve(&s, 1, 1).is_err());
        assert!(cao_curve(&s, 0, 3).is_err());
    }

    #[test]
    fn registry_takes_maximum() {
        let reg = EstimatorRegistry::default();
        assert_eq!(reg.names(), vec!["cao", "kennel"]);
        let (each, combined) = reg.estimate_all(&sine(), 25, 6).unwrap();
        assert_eq!(combined, each.values().map(|e| e.dim).max().unwrap());
        assert!(EstimatorRegistry::empty().names().is_empty());
    }
}
