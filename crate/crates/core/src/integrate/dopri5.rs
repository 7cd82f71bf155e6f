//! Dormand-Prince 5(4) with step-size control and the Hairer continuous
//! extension for output between accepted steps.

use ndarray::Array2;

use super::{check_finite, Integrator};
use crate::error::{Error, Result};
use crate::systems::DynamicalSystem;

// Fields are autonomous, so the stage nodes c_i never appear.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }
}

impl Integrator for Dopri5 {
    fn name(&self) -> &'static str {
        "dopri5"
    }

    fn solve(
        &self,
        system: &dyn DynamicalSystem,
        alpha: &[f64],
        x0: &[f64],
        dt: f64,
        out: &mut Array2<f64>,
    ) -> Result<()> {
        let steps = out.nrows() - 1;
        let t_end = steps as f64 * dt;
        let mut stepper = Dopri5Stepper::new(system, alpha, x0, 0.0, self.rtol, self.atol);
        out.row_mut(0).assign(&ndarray::ArrayView1::from(x0));
        let mut buf = vec![0.0; x0.len()];
        for k in 1..=steps {
            let tk = k as f64 * dt;
            while stepper.t() < tk - 1e-12 * tk.abs().max(1.0) {
                stepper.step(t_end)?;
            }
            stepper.dense(tk, &mut buf);
            out.row_mut(k).assign(&ndarray::ArrayView1::from(&buf[..]));
        }
        Ok(())
    }
}

/// Step-by-step driver exposing accepted steps and dense output.
pub struct Dopri5Stepper<'a> {
    system: &'a dyn DynamicalSystem,
    alpha: &'a [f64],
    rtol: f64,
    atol: f64,
    t: f64,
    h: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    cont: [Vec<f64>; 5],
    t_old: f64,
    h_old: f64,
    accepted: usize,
}

impl<'a> Dopri5Stepper<'a> {
    pub fn new(system: &'a dyn DynamicalSystem, alpha: &'a [f64], x0: &[f64], t0: f64, rtol: f64, atol: f64) -> Self {
        let n = x0.len();
        let zeros = || vec![0.0; n];
        let mut s = Self {
            system,
            alpha,
            rtol,
            atol,
            t: t0,
            h: 0.0,
            y: x0.to_vec(),
            k: std::array::from_fn(|_| zeros()),
            ytmp: zeros(),
            ynew: zeros(),
            cont: std::array::from_fn(|_| zeros()),
            t_old: t0,
            h_old: 0.0,
            accepted: 0,
        };
        s.system.velocity(&s.y, s.alpha, &mut s.k[0]);
        s.h = s.initial_step();
        for c in s.cont.iter_mut() {
            c.fill(0.0);
        }
        s.cont[0].copy_from_slice(x0);
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    // Hairer & Wanner's starting step heuristic.
    fn initial_step(&mut self) -> f64 {
        let n = self.y.len() as f64;
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let sk = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.k[0][i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + h0 * self.k[0][i];
        }
        self.system.velocity(&self.ytmp, self.alpha, &mut self.k[1]);
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.scale(self.y[i], self.y[i]);
            d2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1)
    }

    /// Takes one accepted step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let n = self.y.len();
        let mut rejected_last = false;
        for _ in 0..MAX_STEPS {
            let h = self.h.min(t_limit - self.t);
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::BlowUp { last_valid_time: self.t });
            }
            let y = &self.y;
            let k = &mut self.k;
            let ytmp = &mut self.ytmp;

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k[0][i];
            }
            self.system.velocity(ytmp, self.alpha, &mut k[1]);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
            }
            self.system.velocity(ytmp, self.alpha, &mut k[2]);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            self.system.velocity(ytmp, self.alpha, &mut k[3]);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            self.system.velocity(ytmp, self.alpha, &mut k[4]);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
            }
            self.system.velocity(ytmp, self.alpha, &mut k[5]);
            for i in 0..n {
                self.ynew[i] =
                    y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
            }
            self.system.velocity(&self.ynew, self.alpha, &mut k[6]);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sk = self.atol + self.rtol * y[i].abs().max(self.ynew[i].abs());
                err += (e / sk).powi(2);
            }
            let err = (err / n as f64).sqrt();

            if !err.is_finite() {
                self.h = h * FAC_MIN;
                rejected_last = true;
                continue;
            }

            let fac = if err == 0.0 { FAC_MAX } else { (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX) };
            if err <= 1.0 {
                check_finite(&self.ynew, self.t)?;
                for i in 0..n {
                    let ydiff = self.ynew[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    self.cont[0][i] = y[i];
                    self.cont[1][i] = ydiff;
                    self.cont[2][i] = bspl;
                    self.cont[3][i] = ydiff - h * k[6][i] - bspl;
                    self.cont[4][i] = h
                        * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
                }
                self.t_old = self.t;
                self.h_old = h;
                self.t = if h == t_limit - self.t { t_limit } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                let (first, rest) = self.k.split_at_mut(6);
                std::mem::swap(&mut first[0], &mut rest[0]);
                let next = h * if rejected_last { fac.min(1.0) } else { fac };
                // a step clipped at t_limit says nothing against the previous size
                self.h = if h < self.h { self.h.max(next) } else { next };
                self.accepted += 1;
                return Ok(());
            }
            self.h = h * fac.min(1.0);
            rejected_last = true;
        }
        Err(Error::BlowUp { last_valid_time: self.t })
    }

    /// Dense output at `t` within the last accepted step.
    pub fn dense(&self, t: f64, out: &mut [f64]) {
        if self.h_old == 0.0 || t >= self.t {
            out.copy_from_slice(&self.y);
            return;
        }
        let s = (t - self.t_old) / self.h_old;
        let s1 = 1.0 - s;
        for (i, o) in out.iter_mut().enumerate() {
            let c = |j: usize| self.cont[j][i];
            *o = c(0) + s * (c(1) + s1 * (c(2) + s * (c(3) + s1 * c(4))));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, Method};
    use crate::systems::lorenz;

    #[test]
    fn dense_output_at_accepted_step_matches_direct_run() {
        let tol = 1e-9;
        let sys = lorenz();
        let alpha = [10.0, 28.0, 8.0 / 3.0];
        let x0 = sys.default_x0();
        let mut stepper = Dopri5Stepper::new(&sys, &alpha, &x0, 0.0, tol, tol);
        for _ in 0..40 {
            stepper.step(5.0).unwrap();
        }
        let t_acc = stepper.t();
        let y_acc = stepper.state().to_vec();
        // direct run whose final clipped step lands exactly on t_acc
        let mut direct = Dopri5Stepper::new(&sys, &alpha, &x0, 0.0, tol, tol);
        while direct.t() < t_acc {
            direct.step(t_acc).unwrap();
        }
        assert_eq!(direct.t(), t_acc);
        for (a, b) in y_acc.iter().zip(direct.state()) {
            assert!((a - b).abs() <= 10.0 * tol * (1.0 + a.abs()), "{a} vs {b}");
        }
        // dense evaluation inside the last step agrees with a run stopping there
        let mut probe = Dopri5Stepper::new(&sys, &alpha, &x0, 0.0, tol, tol);
        for _ in 0..40 {
            probe.step(5.0).unwrap();
        }
        probe.step(5.0).unwrap();
        let t_mid = 0.5 * (t_acc + probe.t());
        let mut dense = vec![0.0; 3];
        probe.dense(t_mid, &mut dense);
        let mut stop = Dopri5Stepper::new(&sys, &alpha, &x0, 0.0, tol, tol);
        while stop.t() < t_mid {
            stop.step(t_mid).unwrap();
        }
        for (a, b) in dense.iter().zip(stop.state()) {
            assert!((a - b).abs() <= 10.0 * tol * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn grid_sampling_equals_endpoint_run() {
        let sys = lorenz();
        let alpha = [10.0, 28.0, 8.0 / 3.0];
        let t = integrate(&sys, &alpha, &sys.default_x0(), 0.37, 0.01, &Method::dopri5(1e-10)).unwrap();
        let mut stop = Dopri5Stepper::new(&sys, &alpha, &sys.default_x0(), 0.0, 1e-10, 1e-10);
        while stop.t() < 0.37 {
            stop.step(0.37).unwrap();
        }
        for c in 0..3 {
            assert!((t.states[[37, c]] - stop.state()[c]).abs() < 1e-8);
        }
    }
}
