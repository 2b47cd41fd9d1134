//! Adaptive Dormand-Prince 5(4) integrator for small autonomous or
//! time-dependent systems `y' = f(t, y)` with `y ∈ R^D`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; the sign is taken from the integration direction.
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Stepper holding the current state. Works forwards or backwards in `t`.
pub struct Dopri5<const D: usize, F> {
    rhs: F,
    t: f64,
    y: [f64; D],
    dy: [f64; D],
    h: f64,
    tol: Tolerances,
    steps: usize,
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

impl<const D: usize, F> Dopri5<D, F>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    pub fn new(rhs: F, t0: f64, y0: [f64; D], tol: Tolerances) -> Self {
        let dy = rhs(t0, &y0);
        Self {
            rhs,
            t: t0,
            y: y0,
            dy,
            h: tol.h_init,
            tol,
            steps: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; D] {
        &self.y
    }

    /// `f(t, y)` at the current state.
    pub fn dy(&self) -> &[f64; D] {
        &self.dy
    }

    pub fn rhs(&self, t: f64, y: &[f64; D]) -> [f64; D] {
        (self.rhs)(t, y)
    }

    /// One Dormand-Prince step of size `h` from `(t, y)`; returns the 5th
    /// order solution, the error estimate, and `f` at the new point.
    fn trial(&self, t: f64, y: &[f64; D], k1: &[f64; D], h: f64) -> ([f64; D], [f64; D], [f64; D]) {
        let f = &self.rhs;
        let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
        let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(
                y,
                h,
                &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            y,
            h,
            &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(t + h, &y_new);
        let mut err = [0.0; D];
        for i in 0..D {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        (y_new, err, k7)
    }

    /// Fixed step of size `h` from the current state, without committing it.
    /// Used to locate events inside an accepted step.
    pub fn peek(&self, h: f64) -> [f64; D] {
        self.trial(self.t, &self.y, &self.dy, h).0
    }

    /// Advance by one accepted adaptive step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let dir = if t_limit >= self.t { 1.0 } else { -1.0 };
        let remaining = (t_limit - self.t).abs();
        if remaining == 0.0 {
            return Ok(());
        }
        let mut h = self.h.abs().min(self.tol.h_max);
        loop {
            self.steps += 1;
            if self.steps > self.tol.max_steps {
                return Err(Error::Integration(format!(
                    "step budget exhausted at t={}",
                    self.t
                )));
            }
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            let (y_new, err, dy_new) = self.trial(self.t, &self.y, &self.dy, dir * h_try);
            let mut norm = 0.0f64;
            for i in 0..D {
                let sc = self.tol.atol + self.tol.rtol * self.y[i].abs().max(y_new[i].abs());
                norm = norm.max((err[i] / sc).abs());
            }
            if !norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                h *= 0.25;
            } else if norm <= 1.0 {
                self.t = if last { t_limit } else { self.t + dir * h_try };
                self.y = y_new;
                self.dy = dy_new;
                let grow = if norm == 0.0 {
                    5.0
                } else {
                    (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                // keep the unclamped step when the last step was shortened to hit t_limit
                self.h = (if last { h.max(h_try) } else { h_try }) * grow;
                return Ok(());
            } else {
                h *= (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9);
            }
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Integration(format!(
                    "step size underflow at t={}",
                    self.t
                )));
            }
        }
    }

    /// Integrate to exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t != t_target {
            self.step(t_target)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut s = Dopri5::new(
            |_t, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            Tolerances::default(),
        );
        s.advance_to(5.0).unwrap();
        assert!((s.y()[0] - (-5.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let rhs = |_t, y: &[f64; 2]| [y[1], -y[0]];
        let mut s = Dopri5::new(rhs, 0.0, [0.0, 1.0], Tolerances::default());
        s.advance_to(-3.0).unwrap();
        assert!((s.y()[0] - (-3.0f64).sin()).abs() < 1e-9);
        assert!((s.y()[1] - (-3.0f64).cos()).abs() < 1e-9);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = 2t, y(1) = 1 -> y = t^2
        let mut s = Dopri5::new(
            |t, _y: &[f64; 1]| [2.0 * t],
            1.0,
            [1.0],
            Tolerances::default(),
        );
        s.advance_to(10.0).unwrap();
        assert!((s.y()[0] - 100.0).abs() < 1e-9);
    }
}
