use ndarray::Array2;

use super::{check_finite, Integrator};
use crate::error::Result;
use crate::systems::DynamicalSystem;

pub(crate) const DEFAULT_SUBSTEPS: usize = 4;

/// Classical fixed-step Runge-Kutta with `substeps` internal steps per output interval.
#[derive(Debug, Clone, Copy)]
pub struct Rk4 {
    pub substeps: usize,
}

impl Rk4 {
    pub fn new(substeps: usize) -> Self {
        Self { substeps: substeps.max(1) }
    }
}

impl Integrator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn solve(
        &self,
        system: &dyn DynamicalSystem,
        alpha: &[f64],
        x0: &[f64],
        dt: f64,
        out: &mut Array2<f64>,
    ) -> Result<()> {
        let n = x0.len();
        let h = dt / self.substeps as f64;
        let mut y = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        out.row_mut(0).assign(&ndarray::ArrayView1::from(x0));
        for k in 1..out.nrows() {
            for s in 0..self.substeps {
                system.velocity(&y, alpha, &mut k1);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                system.velocity(&tmp, alpha, &mut k2);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                system.velocity(&tmp, alpha, &mut k3);
                for i in 0..n {
                    tmp[i] = y[i] + h * k3[i];
                }
                system.velocity(&tmp, alpha, &mut k4);
                for i in 0..n {
                    tmp[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                check_finite(&tmp, ((k - 1) * self.substeps + s) as f64 * h)?;
                std::mem::swap(&mut y, &mut tmp);
            }
            out.row_mut(k).assign(&ndarray::ArrayView1::from(&y[..]));
        }
        Ok(())
    }
}
