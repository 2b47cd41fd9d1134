//! The bistable reaction term `f` and the constants derived from it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::wave_profile::WaveProfile;

/// Number of interior sample points used by the sign checks.
const SIGN_SAMPLES: usize = 1000;
/// Composite Simpson intervals for `∫₀¹ f`.
const QUAD_INTERVALS: usize = 2000;
const INTEGRAL_TOL: f64 = 1e-10;
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    /// `f(u) = u (u - θ) (1 - u)`.
    Cubic,
    /// Natural cubic spline through user samples `(u, f)`.
    Tabulated(CubicSpline),
}

/// A reaction term with stable zeros 0 and 1 and an unstable zero `theta`.
///
/// Immutable after construction; `Send + Sync`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BistableNonlinearity {
    theta: f64,
    f_lipschitz: f64,
    kind: Kind,
}

impl BistableNonlinearity {
    /// The cubic `u (u - θ) (1 - u)`, `θ ∈ (0, 1/2)`.
    pub fn make_cubic(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 0.5) {
            return Err(Error::Validation(format!(
                "cubic theta must lie in (0, 1/2), got {theta}; at 1/2 the integral of f vanishes"
            )));
        }
        // f' is a concave parabola; the extremes of |f'| on [0,1] sit at the
        // endpoints or at its vertex.
        let dp = |u: f64| -3.0 * u * u + 2.0 * (1.0 + theta) * u - theta;
        let vertex = (1.0 + theta) / 3.0;
        let f_lipschitz = [0.0, 1.0, vertex]
            .iter()
            .map(|&u| dp(u).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            theta,
            f_lipschitz,
            kind: Kind::Cubic,
        })
    }

    /// Spline through the samples; `θ` is the interior zero. Fails unless the
    /// result passes [`validate`](Self::validate).
    pub fn from_table(u: &[f64], f: &[f64]) -> Result<Self> {
        let spline = CubicSpline::new(u, f)?;
        check_table_ends(&spline)?;
        let theta = spline.interior_root().ok_or_else(|| {
            Error::Validation("tabulated f has no sign change in (0,1)".to_string())
        })?;
        let out = Self::from_spline(spline, theta);
        let report = out.validate();
        if !report.all_pass() {
            return Err(Error::Validation(format!(
                "tabulated f is not bistable: {}",
                report.failures().join(", ")
            )));
        }
        Ok(out)
    }

    /// Spline through the samples with a caller-supplied `θ` and no bistability
    /// checks. Meant for probing [`validate`](Self::validate) with bad data.
    pub fn tabulated_unchecked(u: &[f64], f: &[f64], theta: f64) -> Result<Self> {
        let spline = CubicSpline::new(u, f)?;
        Ok(Self::from_spline(spline, theta))
    }

    fn from_spline(spline: CubicSpline, theta: f64) -> Self {
        let n = 10_000;
        let mut lip = spline
            .y
            .iter()
            .enumerate()
            .map(|(i, _)| spline.deriv(spline.x[i]).abs())
            .fold(0.0, f64::max);
        for i in 0..=n {
            lip = lip.max(spline.deriv(i as f64 / n as f64).abs());
        }
        Self {
            theta,
            f_lipschitz: lip,
            kind: Kind::Tabulated(spline),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `F = sup |f'|` over `[0, 1]`.
    pub fn f_lipschitz(&self) -> f64 {
        self.f_lipschitz
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => u * (u - self.theta) * (1.0 - u),
            Kind::Tabulated(s) => s.eval(u),
        }
    }

    #[inline]
    pub fn deriv(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => -3.0 * u * u + 2.0 * (1.0 + self.theta) * u - self.theta,
            Kind::Tabulated(s) => s.deriv(u),
        }
    }

    #[inline]
    pub fn deriv2(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Cubic => -6.0 * u + 2.0 * (1.0 + self.theta),
            Kind::Tabulated(s) => s.deriv2(u),
        }
    }

    /// `∫₀¹ f` by composite Simpson.
    pub fn integral(&self) -> f64 {
        let n = QUAD_INTERVALS;
        let h = 1.0 / n as f64;
        let mut acc = self.eval(0.0) + self.eval(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.eval(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Checks the four bistability conditions and reports each margin.
    pub fn validate(&self) -> ValidationReport {
        let theta = self.theta;
        let neg_margin = (1..SIGN_SAMPLES)
            .map(|i| theta * i as f64 / SIGN_SAMPLES as f64)
            .map(|u| -self.eval(u))
            .fold(f64::INFINITY, f64::min);
        let pos_margin = (1..SIGN_SAMPLES)
            .map(|i| theta + (1.0 - theta) * i as f64 / SIGN_SAMPLES as f64)
            .map(|u| self.eval(u))
            .fold(f64::INFINITY, f64::min);
        let slope_margin = (-self.deriv(0.0)).min(-self.deriv(1.0));
        let integral = self.integral();
        ValidationReport {
            checks: vec![
                Check::new("f<0 on (0,theta)", neg_margin > 0.0, neg_margin),
                Check::new("f>0 on (theta,1)", pos_margin > 0.0, pos_margin),
                Check::new("f'(0)<0 and f'(1)<0", slope_margin > 0.0, slope_margin),
                Check::new("integral of f > 0", integral > INTEGRAL_TOL, integral),
            ],
        }
    }
}

fn check_table_ends(s: &CubicSpline) -> Result<()> {
    let (x0, xn) = (s.x[0], *s.x.last().unwrap());
    if x0 != 0.0 || xn != 1.0 {
        return Err(Error::Validation(format!(
            "table must span u in [0,1], got [{x0}, {xn}]"
        )));
    }
    let (y0, yn) = (s.y[0], *s.y.last().unwrap());
    if y0.abs() > ZERO_TOL || yn.abs() > ZERO_TOL {
        return Err(Error::Validation(format!(
            "table must vanish at u=0 and u=1, got f(0)={y0}, f(1)={yn}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
}

impl Check {
    fn new(name: &str, pass: bool, margin: f64) -> Self {
        Self {
            name: name.to_string(),
            pass,
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Natural cubic spline. Derivatives are those of the interpolant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 3 {
            return Err(Error::Validation(
                "spline needs at least 3 samples of equal length".to_string(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(
                "spline abscissae must be strictly increasing".to_string(),
            ));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite sample".to_string()));
        }
        let n = x.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            lower[i] = h0;
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        let m = crate::tridiag::solve(&lower, &diag, &upper, &rhs);
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    pub fn deriv2(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.m[i] + b * self.m[i + 1]
    }

    /// First negative-to-positive sign change strictly inside the knot range,
    /// refined by bisection.
    fn interior_root(&self) -> Option<f64> {
        let n = 4000;
        let (lo, hi) = (self.x[0], *self.x.last().unwrap());
        let grid = |i: usize| lo + (hi - lo) * i as f64 / n as f64;
        let mut prev = self.eval(grid(1));
        for i in 2..n {
            let cur = self.eval(grid(i));
            if prev < 0.0 && cur >= 0.0 {
                let (mut a, mut b) = (grid(i - 1), grid(i));
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.eval(mid) < 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                    if b - a < 1e-16 {
                        break;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev = cur;
        }
        None
    }
}

/// Spectral-gap constants used by the certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapConstants {
    /// Band margin `μ₀`.
    pub mu0: f64,
    /// `f' ≤ -delta` on `[0, μ₀] ∪ [1-μ₀, 1]`.
    pub delta: f64,
    /// Half-width `M` of the transition window.
    pub m_window: f64,
    /// `-U*' ≥ delta_m` on `[-M, M]`.
    pub delta_m: f64,
}

const MU0_RESOLUTION: f64 = 1e-6;
const MU0_FLOOR: f64 = 1e-3;
const BAND_SAMPLES: usize = 400;

fn band_ok(f: &BistableNonlinearity, mu: f64, delta: f64) -> bool {
    (0..=BAND_SAMPLES).all(|i| {
        let v = mu * i as f64 / BAND_SAMPLES as f64;
        f.deriv(v) <= -delta && f.deriv(1.0 - v) <= -delta
    })
}

/// `δ` is half the weaker endpoint slope; `μ₀` the widest band (bisection,
/// resolution 1e-6, capped at `min(θ,1-θ)/2`) on which `f' ≤ -δ`; `M` the
/// smallest window outside which `U*` sits in the bands; `δ_M` the minimum of
/// `-U*'` over `[-M, M]`.
pub fn derive_gap_constants(
    f: &BistableNonlinearity,
    profile: &WaveProfile,
) -> Result<GapConstants> {
    if !profile.is_monotone() {
        return Err(Error::Invariant(
            "wave profile is not strictly decreasing".to_string(),
        ));
    }
    let delta = 0.5 * (-f.deriv(0.0)).min(-f.deriv(1.0));
    if !(delta > 0.0) {
        return Err(Error::Invariant(format!(
            "endpoint slopes f'(0)={}, f'(1)={} are not negative",
            f.deriv(0.0),
            f.deriv(1.0)
        )));
    }
    let cap = 0.5 * f.theta().min(1.0 - f.theta());
    let mu0 = if band_ok(f, cap, delta) {
        cap
    } else {
        let (mut lo, mut hi) = (0.0, cap);
        while hi - lo > MU0_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if band_ok(f, mid, delta) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if mu0 < MU0_FLOOR {
        return Err(Error::Invariant(format!(
            "band margin mu0={mu0:.3e} is below the floor {MU0_FLOOR:e}; the transition window would be unbounded"
        )));
    }
    let right = profile.inverse(mu0)?;
    let left = profile.inverse(1.0 - mu0)?;
    let m_window = right.max(-left);
    let delta_m = profile.min_slope_on(-m_window, m_window);
    if !(delta_m > 0.0) {
        return Err(Error::Invariant(format!(
            "profile slope floor {delta_m} on [-M, M] is not positive"
        )));
    }
    Ok(GapConstants {
        mu0,
        delta,
        m_window,
        delta_m,
    })
}

impl GapConstants {
    /// Re-checks the invariants against `f` and `profile` independently of
    /// the derivation.
    pub fn check(&self, f: &BistableNonlinearity, profile: &WaveProfile) -> Result<()> {
        let bad = |msg: String| Err(Error::Invariant(msg));
        if !(self.mu0 > 0.0 && self.mu0 < f.theta().min(1.0 - f.theta())) {
            return bad(format!("mu0={} outside (0, min(theta,1-theta))", self.mu0));
        }
        if self.delta > (-f.deriv(0.0)).min(-f.deriv(1.0)) {
            return bad(format!("delta={} exceeds the endpoint slopes", self.delta));
        }
        for i in 0..=1000 {
            let v = self.mu0 * i as f64 / 1000.0;
            for u in [v, 1.0 - v] {
                if f.deriv(u) > -self.delta {
                    return bad(format!("f'({u})={} > -delta", f.deriv(u)));
                }
            }
        }
        for &rho in &[
            self.m_window + 1e-9,
            self.m_window + 1.0,
            self.m_window + 10.0,
        ] {
            let (lo, _, _) = profile.eval(-rho);
            let (hi, _, _) = profile.eval(rho);
            if lo < 1.0 - self.mu0 - 1e-9 || hi > self.mu0 + 1e-9 {
                return bad(format!("U* leaves the bands at |rho|={rho}"));
            }
        }
        let n = 2000;
        for i in 0..=n {
            let rho = -self.m_window + 2.0 * self.m_window * i as f64 / n as f64;
            let (_, du, _) = profile.eval(rho);
            if -du < self.delta_m * (1.0 - 1e-9) {
                return bad(format!(
                    "-U*'({rho})={} below delta_M={}",
                    -du, self.delta_m
                ));
            }
        }
        Ok(())
    }
}
