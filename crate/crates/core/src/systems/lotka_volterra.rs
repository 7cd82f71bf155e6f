use super::{DynamicalSystem, ParamBox};

/// Lotka-Volterra predator-prey, parameters ordered `(α, β, δ, γ)`:
/// `dx/dt = αx - βxy`, `dy/dt = δxy - γy`. Linear in the parameters.
#[derive(Debug, Clone)]
pub struct LotkaVolterra {
    bounds: ParamBox,
}

impl LotkaVolterra {
    pub fn new() -> Self {
        Self { bounds: ParamBox::new(vec![(0.5, 1.5); 4]).expect("static box") }
    }

    /// First integral `δx - γ ln x + βy - α ln y`, conserved along orbits in the
    /// positive quadrant.
    pub fn conserved_quantity(state: &[f64], p: &[f64]) -> f64 {
        let (x, y) = (state[0], state[1]);
        let (alpha, beta, delta, gamma) = (p[0], p[1], p[2], p[3]);
        delta * x - gamma * x.ln() + beta * y - alpha * y.ln()
    }
}

impl Default for LotkaVolterra {
    fn default() -> Self {
        Self::new()
    }
}

impl DynamicalSystem for LotkaVolterra {
    fn name(&self) -> &str {
        "lvpp"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn param_box(&self) -> &ParamBox {
        &self.bounds
    }

    fn param_labels(&self) -> Vec<String> {
        vec!["alpha".into(), "beta".into(), "delta".into(), "gamma".into()]
    }

    fn velocity(&self, s: &[f64], p: &[f64], out: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        out[0] = p[0] * x - p[1] * x * y;
        out[1] = p[2] * x * y - p[3] * y;
    }

    // [[x, -xy, 0, 0], [0, 0, xy, -y]], no offset
    fn affine_parts(&self, s: &[f64], l: &mut [f64], b: &mut [f64]) -> bool {
        let (x, y) = (s[0], s[1]);
        l.copy_from_slice(&[x, -x * y, 0.0, 0.0, 0.0, 0.0, x * y, -y]);
        b.fill(0.0);
        true
    }

    fn is_affine(&self) -> bool {
        true
    }

    fn default_x0(&self) -> Vec<f64> {
        vec![3.0, 3.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::velocity_of;

    #[test]
    fn equilibria() {
        let sys = LotkaVolterra::new();
        let p = [1.2, 0.7, 0.9, 1.4];
        assert_eq!(velocity_of(&sys, &[0.0, 0.0], &p), vec![0.0, 0.0]);
        let fixed = [p[3] / p[2], p[0] / p[1]];
        for v in velocity_of(&sys, &fixed, &p) {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn box_matches_recipe() {
        assert!(LotkaVolterra::new().param_box().bounds().iter().all(|&b| b == (0.5, 1.5)));
    }
}
