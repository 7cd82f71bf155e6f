use super::{DynamicalSystem, ParamBox};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Compound double pendulum with equal rods, state `(θ₁, θ₂, p_θ₁, p_θ₂)`,
/// parameters `(m, ℓ)`. The parameter map is nonlinear, so there is no affine
/// decomposition.
#[derive(Debug, Clone)]
pub struct DoublePendulum {
    bounds: ParamBox,
}

impl DoublePendulum {
    pub fn new() -> Self {
        Self { bounds: ParamBox::new(vec![(1.0, 2.0), (1.0, 2.0)]).expect("static box") }
    }
}

impl Default for DoublePendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl DynamicalSystem for DoublePendulum {
    fn name(&self) -> &str {
        "double-pendulum"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn param_labels(&self) -> Vec<String> {
        vec!["m".into(), "l".into()]
    }

    fn velocity(&self, s: &[f64], p: &[f64], out: &mut [f64]) {
        let (t1, t2, p1, p2) = (s[0], s[1], s[2], s[3]);
        let (m, l) = (p[0], p[1]);
        let ml2 = m * l * l;
        let (sin_d, cos_d) = (t1 - t2).sin_cos();
        let denom = 16.0 - 9.0 * cos_d * cos_d;
        let w1 = 6.0 / ml2 * (2.0 * p1 - 3.0 * cos_d * p2) / denom;
        let w2 = 6.0 / ml2 * (8.0 * p2 - 3.0 * cos_d * p1) / denom;
        out[0] = w1;
        out[1] = w2;
        out[2] = -0.5 * ml2 * (w1 * w2 * sin_d + 3.0 * GRAVITY / l * t1.sin());
        out[3] = -0.5 * ml2 * (-w1 * w2 * sin_d + GRAVITY / l * t2.sin());
    }

    fn default_x0(&self) -> Vec<f64> {
        vec![-44.334542, 223.53554, -1.2249799, 2.535486]
    }
}
