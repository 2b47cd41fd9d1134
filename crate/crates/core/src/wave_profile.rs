//! One-dimensional travelling wave `U*(ξ)` and speed `c*` solving
//! `U'' + c U' + f(U) = 0`, `U(-∞) = 1`, `U(+∞) = 0`, pinned by `U*(0) = 1/2`.
//!
//! The speed is found by shooting from the unstable manifold of `(1, 0)` in
//! the phase plane `(U, W = U')` and bisecting on overshoot (`U` reaches 0
//! with `W < 0`) versus undershoot (`W` returns to 0 with `U > 0`). The
//! tabulated profile is then assembled from two halves that are each
//! integrated in their stable direction: forward from the unstable manifold
//! of `(1, 0)` and backward from the stable manifold of `(0, 0)`, meeting at
//! `U = 1/2`. Beyond the start points the linearised tails are exact to
//! `O(offset²)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::BistableNonlinearity;
use crate::ode::{Dopri5, Tolerances};

/// `(ξ, U, U')` along one half of the profile.
pub type Sample = (f64, f64, f64);

pub const GRID_HALF_WIDTH: f64 = 40.0;
pub const GRID_STEP: f64 = 0.01;
const MANIFOLD_OFFSET: f64 = 1e-8;
const C_MIN: f64 = 1e-6;
const C_MAX: f64 = 10.0;
const SHOOT_HORIZON: f64 = 400.0;
const INVERSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    Overshoot,
    Undershoot,
    Undecided,
}

/// Tail decay exponents: `1 - U ~ e^{left ξ}` as `ξ → -∞` and
/// `U ~ e^{-right ξ}` as `ξ → +∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRates {
    pub left: f64,
    pub right: f64,
}

/// Tabulated, pinned travelling-wave profile. Immutable after
/// [`solve_profile`]; `Send + Sync`.
#[derive(Debug, Clone, Serialize)]
pub struct WaveProfile {
    pub c_star: f64,
    /// Final bisection bracket on `c`.
    pub c_bracket: (f64, f64),
    pub xi_grid: Vec<f64>,
    pub u_values: Vec<f64>,
    pub du_values: Vec<f64>,
    pub tail_rates: TailRates,
    #[serde(skip)]
    f: BistableNonlinearity,
}

fn tail_rates(f: &BistableNonlinearity, c: f64) -> TailRates {
    // λ² + c λ + f'(u*) = 0 at u* = 1 (unstable root) and u* = 0 (stable root)
    let left = 0.5 * (-c + (c * c - 4.0 * f.deriv(1.0)).sqrt());
    let right = 0.5 * (c + (c * c - 4.0 * f.deriv(0.0)).sqrt());
    TailRates { left, right }
}

fn shoot_tolerances(tol: f64) -> Tolerances {
    Tolerances {
        rtol: 1e-12,
        atol: tol / 100.0,
        h_init: 1e-3,
        h_max: 0.5,
        max_steps: 2_000_000,
    }
}

fn classify(f: &BistableNonlinearity, c: f64, tol: f64) -> Result<Shot> {
    let lam = tail_rates(f, c).left;
    let rhs = |_x: f64, y: &[f64; 2]| [y[1], -c * y[1] - f.eval(y[0])];
    let y0 = [1.0 - MANIFOLD_OFFSET, -MANIFOLD_OFFSET * lam];
    let mut s = Dopri5::new(rhs, 0.0, y0, shoot_tolerances(tol));
    while s.t() < SHOOT_HORIZON {
        s.step(SHOOT_HORIZON)?;
        let [u, w] = *s.y();
        if u < 0.0 {
            return Ok(Shot::Overshoot);
        }
        if w >= 0.0 {
            return Ok(Shot::Undershoot);
        }
    }
    // heavily damped trajectories creep into the node at (θ, 0) without W
    // changing sign
    if s.y()[0] > 1e-3 {
        Ok(Shot::Undershoot)
    } else {
        Ok(Shot::Undecided)
    }
}

/// Find `x` in `(0, h_total]` where `pred(peek(x))` first becomes true,
/// assuming it is false at 0 and true at `h_total`.
fn locate<const D: usize, F>(
    s: &Dopri5<D, F>,
    h_total: f64,
    pred: impl Fn(&[f64; D]) -> bool,
) -> f64
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let (mut a, mut b) = (0.0, h_total);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if pred(&s.peek(mid)) {
            b = mid;
        } else {
            a = mid;
        }
    }
    b
}

/// Build one half of the profile. `forward = true` is the left half
/// (from the unstable manifold of (1,0), ξ increasing); otherwise the right
/// half (from the stable manifold of (0,0), ξ decreasing). Returns the
/// distance from the start point to the pinning point and a sampler.
pub fn half_profile(
    f: &BistableNonlinearity,
    c: f64,
    tol: f64,
    forward: bool,
) -> Result<(f64, Vec<Sample>)> {
    let rates = tail_rates(f, c);
    // The left half is integrated in V = 1 - U so that the small deviation
    // from 1 is carried at full relative precision.
    let rhs = move |_x: f64, y: &[f64; 2]| {
        if forward {
            [-y[1], -c * y[1] - f.eval(1.0 - y[0])]
        } else {
            [y[1], -c * y[1] - f.eval(y[0])]
        }
    };
    let (y0, dir) = if forward {
        ([MANIFOLD_OFFSET, -MANIFOLD_OFFSET * rates.left], 1.0)
    } else {
        ([MANIFOLD_OFFSET, -MANIFOLD_OFFSET * rates.right], -1.0)
    };
    let crossed = |y: &[f64; 2]| y[0] >= 0.5;
    // The halves start at O(offset) amplitudes, so the error control must be
    // relative or the phase along the trajectory drifts.
    let tols = Tolerances {
        rtol: 1e-13,
        atol: 1e-22,
        ..shoot_tolerances(tol)
    };

    // pass 1: distance from the start point to U = 1/2
    let mut s = Dopri5::new(rhs, 0.0, y0, tols);
    let limit = dir * SHOOT_HORIZON;
    let span = loop {
        let t0 = s.t();
        let y_prev = *s.y();
        s.step(limit)?;
        if s.y()[1] >= 0.0 || s.y()[0] > 1.0 || s.y()[0] <= 0.0 {
            return Err(Error::Integration(format!(
                "profile trajectory is not monotone at xi={} (U={}, W={})",
                s.t(),
                s.y()[0],
                s.y()[1]
            )));
        }
        if crossed(s.y()) {
            let probe = Dopri5::new(rhs, t0, y_prev, tols);
            let h = locate(&probe, s.t() - t0, crossed);
            break (t0 + h).abs();
        }
        if s.t() == limit {
            return Err(Error::Integration(
                "profile half never reached U = 1/2".to_string(),
            ));
        }
    };

    // pass 2: sample at the pinned grid nodes, ζ = ξ ∓ span
    let n_half = (GRID_HALF_WIDTH / GRID_STEP).round() as i64;
    let start = -dir * span; // start point in pinned coordinates
    let mut s = Dopri5::new(rhs, start, y0, tols);
    let mut out = Vec::with_capacity(n_half as usize + 1);
    for j in 0..=n_half {
        let i = if forward { j - n_half } else { n_half - j };
        let z = i as f64 * GRID_STEP;
        let beyond = if forward { z < start } else { z > start };
        if beyond {
            let d = (z - start).abs();
            if forward {
                let g = MANIFOLD_OFFSET * (-rates.left * d).exp();
                out.push((z, 1.0 - g, -rates.left * g));
            } else {
                let g = MANIFOLD_OFFSET * (-rates.right * d).exp();
                out.push((z, g, -rates.right * g));
            }
            continue;
        }
        s.advance_to(z)?;
        let [a, w] = *s.y();
        out.push((z, if forward { 1.0 - a } else { a }, w));
    }
    if !forward {
        out.reverse();
    }
    Ok((span, out))
}

/// Solve for `(U*, c*)`. `tol` bounds the final width of the `c` bracket.
pub fn solve_profile(f: &BistableNonlinearity, tol: f64) -> Result<WaveProfile> {
    if !(tol > 1e-12 && tol < 1e-4) {
        return Err(Error::Parameter(format!(
            "profile tolerance must lie in (1e-12, 1e-4), got {tol}"
        )));
    }
    let (mut lo, mut hi) = (C_MIN, C_MAX);
    if classify(f, lo, tol)? != Shot::Overshoot || classify(f, hi, tol)? != Shot::Undershoot {
        return Err(Error::NoWave(format!(
            "no speed bracket in c in [{C_MIN:e}, {C_MAX}]"
        )));
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        match classify(f, mid, tol)? {
            Shot::Overshoot => lo = mid,
            Shot::Undershoot => hi = mid,
            Shot::Undecided => {
                lo = mid;
                hi = mid;
            }
        }
    }
    let c = 0.5 * (lo + hi);

    let (_, left) = half_profile(f, c, tol, true)?;
    let (_, right) = half_profile(f, c, tol, false)?;
    let n = left.len() + right.len() - 1;
    let mut xi_grid = Vec::with_capacity(n);
    let mut u_values = Vec::with_capacity(n);
    let mut du_values = Vec::with_capacity(n);
    for &(z, u, du) in &left[..left.len() - 1] {
        xi_grid.push(z);
        u_values.push(u);
        du_values.push(du);
    }
    // both halves end at ζ = 0; average the slopes there
    let (_, ul, dul) = left[left.len() - 1];
    let (_, ur, dur) = right[0];
    xi_grid.push(0.0);
    u_values.push(0.5 * (ul + ur));
    du_values.push(0.5 * (dul + dur));
    for &(z, u, du) in &right[1..] {
        xi_grid.push(z);
        u_values.push(u);
        du_values.push(du);
    }
    let profile = WaveProfile {
        c_star: c,
        c_bracket: (lo, hi),
        xi_grid,
        u_values,
        du_values,
        tail_rates: tail_rates(f, c),
        f: f.clone(),
    };
    if !profile.is_monotone() {
        return Err(Error::Integration(
            "assembled profile is not strictly decreasing".to_string(),
        ));
    }
    Ok(profile)
}

impl WaveProfile {
    pub fn nonlinearity(&self) -> &BistableNonlinearity {
        &self.f
    }

    pub fn is_monotone(&self) -> bool {
        self.u_values.windows(2).all(|w| w[1] < w[0]) && self.du_values.iter().all(|&d| d < 0.0)
    }

    fn x_min(&self) -> f64 {
        self.xi_grid[0]
    }

    fn x_max(&self) -> f64 {
        *self.xi_grid.last().unwrap()
    }

    /// `(U*, U*', U*'')` at `xi`: cubic Hermite inside the grid, exponential
    /// tails outside, `U*'' = -c* U*' - f(U*)`.
    pub fn eval(&self, xi: f64) -> (f64, f64, f64) {
        let c = self.c_star;
        let (u, du) = if xi <= self.x_min() {
            let g = (1.0 - self.u_values[0]) * (self.tail_rates.left * (xi - self.x_min())).exp();
            (1.0 - g, -self.tail_rates.left * g)
        } else if xi >= self.x_max() {
            let last = self.u_values.len() - 1;
            let g = self.u_values[last] * (-self.tail_rates.right * (xi - self.x_max())).exp();
            (g, -self.tail_rates.right * g)
        } else {
            let pos = (xi - self.x_min()) / GRID_STEP;
            let i = (pos.floor() as usize).min(self.xi_grid.len() - 2);
            let s = (xi - self.xi_grid[i]) / GRID_STEP;
            let (u0, u1) = (self.u_values[i], self.u_values[i + 1]);
            let (d0, d1) = (self.du_values[i], self.du_values[i + 1]);
            let dd0 = -c * d0 - self.f.eval(u0);
            let dd1 = -c * d1 - self.f.eval(u1);
            (
                hermite(s, GRID_STEP, u0, u1, d0, d1),
                hermite(s, GRID_STEP, d0, d1, dd0, dd1),
            )
        };
        (u, du, -c * du - self.f.eval(u))
    }

    /// The unique `ξ` with `U*(ξ) = level`, `level ∈ [1e-6, 1 - 1e-6]`.
    pub fn inverse(&self, level: f64) -> Result<f64> {
        if !(1e-6..=1.0 - 1e-6).contains(&level) {
            return Err(Error::Domain(format!(
                "profile level {level} outside [1e-6, 1-1e-6]"
            )));
        }
        let (mut a, mut b) = (self.x_min() - 20.0, self.x_max() + 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let (u, _, _) = self.eval(mid);
            if (u - level).abs() < INVERSE_TOL * 1e-2 || mid == a || mid == b {
                return Ok(mid);
            }
            if u > level {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `min(-U*')` over `[a, b]`, sampled at the grid nodes and the endpoints.
    pub fn min_slope_on(&self, a: f64, b: f64) -> f64 {
        let mut m = (-self.eval(a).1).min(-self.eval(b).1);
        for (x, du) in self.xi_grid.iter().zip(&self.du_values) {
            if *x >= a && *x <= b {
                m = m.min(-du);
            }
        }
        m
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.du_values.iter().fold(0.0f64, |m, d| m.max(d.abs()))
    }

    pub fn max_abs_second(&self) -> f64 {
        self.u_values
            .iter()
            .zip(&self.du_values)
            .map(|(&u, &du)| (-self.c_star * du - self.f.eval(u)).abs())
            .fold(0.0, f64::max)
    }

    /// `max |D₄(U*') + c* U*' + f(U*)|` over interior nodes, where `D₄` is
    /// the fourth-order centred difference of the tabulated slopes.
    pub fn ode_residual_max(&self) -> f64 {
        let h = GRID_STEP;
        let d = &self.du_values;
        (2..d.len() - 2)
            .map(|i| {
                let ddu = (-d[i + 2] + 8.0 * d[i + 1] - 8.0 * d[i - 1] + d[i - 2]) / (12.0 * h);
                (ddu + self.c_star * d[i] + self.f.eval(self.u_values[i])).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn hermite(s: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic(xi: f64) -> f64 {
        1.0 / (1.0 + (xi / 2f64.sqrt()).exp())
    }

    fn cubic_profile(theta: f64) -> WaveProfile {
        let f = BistableNonlinearity::make_cubic(theta).unwrap();
        solve_profile(&f, 1e-10).unwrap()
    }

    #[test]
    fn closed_form_speed_and_shape() {
        let p = cubic_profile(0.25);
        assert!((p.c_star - 0.5 / 2f64.sqrt()).abs() < 1e-8, "{}", p.c_star);
        let (u, _, _) = p.eval((3.0f64).ln() * 2f64.sqrt());
        assert!((u - 0.25).abs() < 1e-6);
        assert!((p.eval(-20.0).0 - logistic(-20.0)).abs() < 1e-6);
        assert!((p.eval(0.0).0 - 0.5).abs() < 1e-10);
    }

    #[test]
    fn profile_invariants() {
        let p = cubic_profile(0.3);
        assert!((p.c_star - 0.2828427).abs() < 1e-6);
        assert!(p.u_values[0] > 1.0 - 1e-6 && *p.u_values.last().unwrap() < 1e-6);
        assert!(p.is_monotone());
        let r = p.ode_residual_max();
        assert!(r < 1e-8, "residual {r}");
    }

    #[test]
    fn inverse_of_closed_form_levels() {
        let p = cubic_profile(0.25);
        let x = 2f64.sqrt() * 3f64.ln();
        assert!(p.inverse(0.5).unwrap().abs() < 1e-9);
        assert!((p.inverse(0.25).unwrap() - x).abs() < 1e-6);
        assert!((p.inverse(0.75).unwrap() + x).abs() < 1e-6);
        assert!(p.inverse(0.0).is_err());
        assert!(p.inverse(1.0 - 1e-7).is_err());
    }

    #[test]
    fn tails_are_monotone_beyond_the_grid() {
        let p = cubic_profile(0.25);
        let mut prev = p.eval(40.0).0;
        for i in 1..50 {
            let u = p.eval(40.0 + i as f64).0;
            assert!(u < prev && u > 0.0);
            prev = u;
        }
        assert!(p.eval(-200.0).0 <= 1.0);
    }

    #[test]
    fn tolerance_out_of_range() {
        let f = BistableNonlinearity::make_cubic(0.25).unwrap();
        assert!(matches!(solve_profile(&f, 1e-3), Err(Error::Parameter(_))));
    }
}
