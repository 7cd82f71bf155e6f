use super::{DynamicalSystem, ParamBox};
use crate::error::{Error, Result};

/// Lorenz96 with a single forcing parameter `F`.
///
/// `dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F` with all indices taken
/// modulo the dimension (the usual cyclic wrap `x_0 = x_N`, `x_{-1} = x_{N-1}`).
#[derive(Debug, Clone)]
pub struct Lorenz96 {
    dim: usize,
    bounds: ParamBox,
}

impl Lorenz96 {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 4 {
            return Err(Error::InvalidDimension(format!("lorenz96 needs at least 4 states, got {dim}")));
        }
        Ok(Self { dim, bounds: ParamBox::new(vec![(10.0, 20.0)]).expect("static box") })
    }

    fn drift(&self, x: &[f64], i: usize) -> f64 {
        let n = self.dim;
        (x[(i + 1) % n] - x[(i + n - 2) % n]) * x[(i + n - 1) % n] - x[i]
    }
}

impl DynamicalSystem for Lorenz96 {
    fn name(&self) -> &str {
        "lorenz96"
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn param_labels(&self) -> Vec<String> {
        vec!["F".into()]
    }

    fn velocity(&self, x: &[f64], p: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.drift(x, i) + p[0];
        }
    }

    fn affine_parts(&self, x: &[f64], l: &mut [f64], b: &mut [f64]) -> bool {
        for i in 0..self.dim {
            l[i] = 1.0;
            b[i] = self.drift(x, i);
        }
        true
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn default_x0(&self) -> Vec<f64> {
        if self.dim == 4 {
            vec![-2.46820633, 0.09570264, 1.59270902, 10.21372147]
        } else {
            // off-equilibrium start for other sizes
            let mut x0 = vec![0.0; self.dim];
            x0[0] = 0.01;
            x0
        }
    }
}
