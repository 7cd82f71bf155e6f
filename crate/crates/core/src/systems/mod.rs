//! Parameterized vector fields `dx/dt = F(x, α)` and a name-keyed catalog.
//!
//! Every system reports its parameter box and, when `α ↦ F(x, α)` is affine
//! for fixed `x`, the decomposition `F(x, α) = L_x α + b_x`.

mod double_pendulum;
mod lorenz;
mod lorenz96;
mod lotka_volterra;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use double_pendulum::{DoublePendulum, GRAVITY};
pub use lorenz::Lorenz;
pub use lorenz96::Lorenz96;
pub use lotka_volterra::LotkaVolterra;

/// Axis-aligned box of admissible parameter values, one `(lo, hi)` per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox(Vec<(f64, f64)>);

impl ParamBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::arg("parameter box must have at least one axis"));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::arg(format!("parameter axis {i}: need finite lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(Self(bounds))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.0.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.0.iter().map(|&(lo, hi)| hi - lo).collect()
    }

    pub fn contains(&self, alpha: &[f64]) -> bool {
        alpha.len() == self.0.len() && alpha.iter().zip(&self.0).all(|(&a, &(lo, hi))| a >= lo && a <= hi)
    }

    pub fn clip(&self, alpha: &mut [f64]) {
        for (a, &(lo, hi)) in alpha.iter_mut().zip(&self.0) {
            *a = a.clamp(lo, hi);
        }
    }

    /// Box grown about its center by `factor` (2.0 doubles each width).
    pub fn scaled(&self, factor: f64) -> Self {
        Self(
            self.0
                .iter()
                .map(|&(lo, hi)| {
                    let c = 0.5 * (lo + hi);
                    let h = 0.5 * (hi - lo) * factor;
                    (c - h, c + h)
                })
                .collect(),
        )
    }
}

/// A parameterized dynamical system `dx/dt = F(x, α)`.
///
/// Implementations are immutable and shared across threads.
pub trait DynamicalSystem: Send + Sync + fmt::Debug {
    /// Catalog name.
    fn name(&self) -> &str;

    fn state_dim(&self) -> usize;

    fn param_dim(&self) -> usize {
        self.param_box().dim()
    }

    fn param_box(&self) -> &ParamBox;

    fn param_labels(&self) -> Vec<String>;

    /// Writes `F(x, α)` into `out`.
    fn velocity(&self, x: &[f64], alpha: &[f64], out: &mut [f64]);

    /// Writes `L_x` (row-major `n × m`) and `b_x` when the field is affine in
    /// its parameters. Returns `false`, leaving the buffers untouched, otherwise.
    fn affine_parts(&self, _x: &[f64], _l: &mut [f64], _b: &mut [f64]) -> bool {
        false
    }

    fn is_affine(&self) -> bool {
        false
    }

    /// Initial condition used by the standard dataset recipes.
    fn default_x0(&self) -> Vec<f64>;
}

/// Shared handle to a catalog system.
pub type SystemSpec = Arc<dyn DynamicalSystem>;

/// Convenience: `F(x, α)` as a fresh vector.
pub fn velocity_of(system: &dyn DynamicalSystem, x: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; system.state_dim()];
    system.velocity(x, alpha, &mut out);
    out
}

/// Returns `(L_x, b_x)` with `F(x, α) = L_x α + b_x`.
pub fn evaluate_affine(system: &dyn DynamicalSystem, x: &[f64]) -> Result<(Array2<f64>, Array1<f64>)> {
    let (n, m) = (system.state_dim(), system.param_dim());
    if x.len() != n {
        return Err(Error::shape(format!("state has {} components, system `{}` expects {n}", x.len(), system.name())));
    }
    let mut l = vec![0.0; n * m];
    let mut b = vec![0.0; n];
    if !system.affine_parts(x, &mut l, &mut b) {
        return Err(Error::NotAffine(system.name().to_string()));
    }
    let l = Array2::from_shape_vec((n, m), l).expect("n*m buffer");
    Ok((l, Array1::from_vec(b)))
}

/// Construction options forwarded to catalog factories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOptions {
    /// State dimension for systems with a variable size (Lorenz96).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

pub type SystemFactory = fn(&SystemOptions) -> Result<SystemSpec>;

/// Name-keyed registry of system constructors.
#[derive(Clone)]
pub struct SystemCatalog {
    factories: BTreeMap<String, SystemFactory>,
}

impl fmt::Debug for SystemCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for SystemCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SystemCatalog {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut catalog = Self::empty();
        catalog.register("lorenz", |_| Ok(Arc::new(lorenz())));
        catalog.register("lorenz96", |opts| Ok(Arc::new(lorenz96(opts.dim.unwrap_or(4))?)));
        catalog.register("lvpp", |_| Ok(Arc::new(lotka_volterra())));
        catalog.register("double-pendulum", |_| Ok(Arc::new(double_pendulum())));
        catalog
    }

    /// Adds or replaces a factory.
    pub fn register(&mut self, name: &str, factory: SystemFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, name: &str, opts: &SystemOptions) -> Result<SystemSpec> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownName { kind: "system", name: name.to_string() })?;
        factory(opts)
    }
}

/// Looks `name` up in the built-in catalog.
pub fn system_by_name(name: &str, opts: &SystemOptions) -> Result<SystemSpec> {
    SystemCatalog::builtin().create(name, opts)
}

pub fn lorenz() -> Lorenz {
    Lorenz::new()
}

pub fn lorenz96(dim: usize) -> Result<Lorenz96> {
    Lorenz96::new(dim)
}

pub fn lotka_volterra() -> LotkaVolterra {
    LotkaVolterra::new()
}

pub fn double_pendulum() -> DoublePendulum {
    DoublePendulum::new()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine_gap(system: &dyn DynamicalSystem, x: &[f64], alpha: &[f64]) -> f64 {
        let (l, b) = evaluate_affine(system, x).unwrap();
        let via_affine = l.dot(&Array1::from_vec(alpha.to_vec())) + &b;
        let direct = velocity_of(system, x, alpha);
        via_affine.iter().zip(&direct).map(|(a, d)| (a - d).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn catalog_names_are_exact() {
        let names: Vec<_> = SystemCatalog::builtin().names().map(str::to_string).collect();
        assert_eq!(names, ["double-pendulum", "lorenz", "lorenz96", "lvpp"]);
        assert!(matches!(system_by_name("rossler", &SystemOptions::default()), Err(Error::UnknownName { .. })));
        let l96 = system_by_name("lorenz96", &SystemOptions { dim: Some(6) }).unwrap();
        assert_eq!(l96.state_dim(), 6);
    }

    #[test]
    fn param_box_rejects_inverted_bounds() {
        assert!(ParamBox::new(vec![(1.0, 1.0)]).is_err());
        assert!(ParamBox::new(vec![(0.0, 1.0), (3.0, 2.0)]).is_err());
        assert!(ParamBox::new(vec![]).is_err());
    }

    #[test]
    fn evaluate_affine_examples() {
        let (l, b) = evaluate_affine(&lorenz(), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(l, ndarray::arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -3.0]]));
        assert_eq!(b, ndarray::arr1(&[0.0, -5.0, 2.0]));

        let (l, b) = evaluate_affine(&lotka_volterra(), &[0.0, 0.0]).unwrap();
        assert!(l.iter().all(|&v| v == 0.0));
        assert!(b.iter().all(|&v| v == 0.0));

        assert!(matches!(evaluate_affine(&double_pendulum(), &[0.0; 4]), Err(Error::NotAffine(_))));
        assert!(matches!(evaluate_affine(&lorenz(), &[0.0; 2]), Err(Error::Shape(_))));
    }

    // 10,000 random (x, α) per affine system, α drawn in twice the box and x
    // in a box covering the observed attractor ranges.
    #[test]
    fn affine_decomposition_agrees_with_velocity() {
        let systems: Vec<(SystemSpec, f64)> = vec![
            (Arc::new(lorenz()), 50.0),
            (Arc::new(lorenz96(4).unwrap()), 15.0),
            (Arc::new(lorenz96(7).unwrap()), 15.0),
            (Arc::new(lotka_volterra()), 6.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (system, state_half_width) in systems {
            let wide = system.param_box().scaled(2.0);
            for _ in 0..10_000 {
                let x: Vec<f64> =
                    (0..system.state_dim()).map(|_| rng.random_range(-state_half_width..state_half_width)).collect();
                let alpha: Vec<f64> = wide.bounds().iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
                let gap = affine_gap(system.as_ref(), &x, &alpha);
                assert!(gap <= 1e-10, "{}: gap {gap} at x={x:?} α={alpha:?}", system.name());
            }
        }
    }
}
