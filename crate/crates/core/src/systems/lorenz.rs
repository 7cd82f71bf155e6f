use super::{DynamicalSystem, ParamBox};

/// Lorenz convection model with parameters `(σ, ρ, β)`.
#[derive(Debug, Clone)]
pub struct Lorenz {
    bounds: ParamBox,
}

impl Lorenz {
    pub fn new() -> Self {
        Self { bounds: ParamBox::new(vec![(9.0, 11.0), (27.0, 29.0), (2.0, 4.0)]).expect("static box") }
    }
}

impl Default for Lorenz {
    fn default() -> Self {
        Self::new()
    }
}

impl DynamicalSystem for Lorenz {
    fn name(&self) -> &str {
        "lorenz"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn param_labels(&self) -> Vec<String> {
        vec!["sigma".into(), "rho".into(), "beta".into()]
    }

    fn velocity(&self, s: &[f64], p: &[f64], out: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        let (sigma, rho, beta) = (p[0], p[1], p[2]);
        out[0] = sigma * (y - x);
        out[1] = x * (rho - z) - y;
        out[2] = x * y - beta * z;
    }

    // L_x = [[y - x, 0, 0], [0, x, 0], [0, 0, -z]],  b_x = [0, -xz - y, xy]
    fn affine_parts(&self, s: &[f64], l: &mut [f64], b: &mut [f64]) -> bool {
        let (x, y, z) = (s[0], s[1], s[2]);
        l.fill(0.0);
        l[0] = y - x;
        l[4] = x;
        l[8] = -z;
        b[0] = 0.0;
        b[1] = -x * z - y;
        b[2] = x * y;
        true
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn default_x0(&self) -> Vec<f64> {
        vec![0.0, 1.0, 1.05]
    }
}
