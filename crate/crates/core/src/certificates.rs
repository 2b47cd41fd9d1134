//! Numerical certificates for the comparison argument: the ODE pair
//! `q̇ + δq = g_ε`, `γξ̇ = Cq + g_ε` and its decay envelope, the linearized
//! pair driving angular growth, shift mollification, and lattice
//! evaluation of `NL[ū]` for `ū = U*(r + s_ε(Θ) - ξ(t)) + q(t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::GapConstants;
use crate::ode::{Dopri5, Tolerances};
use crate::wave_profile::WaveProfile;

/// Smallest admissible `c* T - k ln T`.
pub const MIN_FRAME_RADIUS: f64 = 100.0;
const SAMPLES_PER_DECADE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub c_const: f64,
    pub eps: f64,
    pub t_start: f64,
    pub t_final: f64,
    pub c_star: f64,
    pub k: f64,
    pub n_dim: usize,
    /// Lipschitz constant `F` of `f`, used by the linearized pair.
    pub f_lipschitz: f64,
}

impl CertificateParams {
    /// `δ = γ = C = 1`, `ε = 0.1`, `N = 2`, `c* = 1/(2√2)`, `T = 10³`,
    /// `η = 0.01`, integrated to `10⁶`.
    pub fn reference() -> Self {
        let c_star = 0.5 / std::f64::consts::SQRT_2;
        Self {
            delta: 1.0,
            gamma: 1.0,
            eta: 0.01,
            c_const: 1.0,
            eps: 0.1,
            t_start: 1e3,
            t_final: 1e6,
            c_star,
            k: 1.0 / c_star,
            n_dim: 2,
            f_lipschitz: 0.75,
        }
    }

    /// Constants for the supersolution certificate: `δ, γ = δ_M` from the gap
    /// constants, `C = 2 max(F + δ, 1)`, `T = 10⁴/ε²`, run over `[T, 100T]`.
    pub fn from_gaps(
        gaps: &GapConstants,
        f_lipschitz: f64,
        c_star: f64,
        n_dim: usize,
        eps: f64,
    ) -> Self {
        let t_start = 1e4 / (eps * eps);
        Self {
            delta: gaps.delta,
            gamma: gaps.delta_m,
            eta: 0.01,
            c_const: 2.0 * (f_lipschitz + gaps.delta).max(1.0),
            eps,
            t_start,
            t_final: 100.0 * t_start,
            c_star,
            k: (n_dim as f64 - 1.0) / c_star,
            n_dim,
            f_lipschitz,
        }
    }

    /// `η = 0` and `C = 0` are accepted so that the forcing can be switched off.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.delta,
            self.gamma,
            self.eps,
            self.t_start,
            self.c_star,
            self.f_lipschitz,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || !(self.eta >= 0.0)
            || !(self.c_const >= 0.0)
            || !(self.k >= 0.0)
            || self.n_dim < 1
        {
            return Err(Error::Parameter(format!(
                "invalid certificate parameters {self:?}"
            )));
        }
        if !(self.t_final > self.t_start) {
            return Err(Error::Parameter(format!(
                "t_final={} must exceed T={}",
                self.t_final, self.t_start
            )));
        }
        let frame = self.c_star * self.t_start - self.k * self.t_start.ln();
        if frame < MIN_FRAME_RADIUS {
            return Err(Error::Parameter(format!(
                "c* T - k ln T = {frame} is below {MIN_FRAME_RADIUS}"
            )));
        }
        Ok(())
    }

    fn frame_radius(&self, t: f64) -> f64 {
        self.c_star * t - self.k * t.ln()
    }

    /// Log-spaced output times on `[T, t_final]`, `per_decade` per decade.
    fn output_times(&self, per_decade: usize) -> Vec<f64> {
        let decades = (self.t_final / self.t_start).log10();
        let n = ((decades * per_decade as f64).ceil() as usize).max(10);
        let mut ts: Vec<f64> = (0..=n)
            .map(|i| self.t_start * (self.t_final / self.t_start).powf(i as f64 / n as f64))
            .collect();
        ts[0] = self.t_start;
        ts[n] = self.t_final;
        ts
    }
}

/// `g_ε(t, ξ) = (C/ε) |(N-1)/(c* t - k ln t + ξ) - k/t|`.
pub fn g_eps(p: &CertificateParams, t: f64, xi: f64) -> Result<f64> {
    let d = p.frame_radius(t) + xi;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("c* t - k ln t + xi = {d} at t={t}")));
    }
    let curv = (p.n_dim as f64 - 1.0) / d;
    Ok(p.c_const / p.eps * (curv - p.k / t).abs())
}

fn g_unchecked(p: &CertificateParams, t: f64, xi: f64) -> f64 {
    g_eps(p, t, xi).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub t_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub n_theta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub times: Vec<f64>,
    pub q_values: Vec<f64>,
    pub xi_values: Vec<f64>,
    /// Right-hand sides at the samples.
    pub dq_values: Vec<f64>,
    pub dxi_values: Vec<f64>,
    pub envelope_pass: bool,
    pub envelope_k: f64,
    pub residual_min: Option<f64>,
    pub grid_spec: Option<LatticeSpec>,
}

impl Certificate {
    pub fn from_samples(times: Vec<f64>, q_values: Vec<f64>, xi_values: Vec<f64>) -> Result<Self> {
        if times.len() != q_values.len() || times.len() != xi_values.len() || times.len() < 2 {
            return Err(Error::Parameter(
                "trajectory arrays must match and hold 2+ samples".to_string(),
            ));
        }
        let n = times.len();
        Ok(Self {
            times,
            q_values,
            xi_values,
            dq_values: vec![0.0; n],
            dxi_values: vec![0.0; n],
            envelope_pass: false,
            envelope_k: f64::INFINITY,
            residual_min: None,
            grid_spec: None,
        })
    }

    pub fn sup_xi(&self) -> f64 {
        self.xi_values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cubic Hermite interpolation of `(q, ξ)` at `t`.
    pub fn interpolate(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.times.len();
        if !(t >= self.times[0] && t <= self.times[n - 1]) {
            return Err(Error::Domain(format!("t={t} outside the trajectory")));
        }
        let j = self.times.partition_point(|&s| s < t);
        if self.times[j] == t {
            return Ok((self.q_values[j], self.xi_values[j]));
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let herm = |y: &[f64], dy: &[f64]| {
            h00 * y[j - 1] + h10 * h * dy[j - 1] + h01 * y[j] + h11 * h * dy[j]
        };
        Ok((
            herm(&self.q_values, &self.dq_values),
            herm(&self.xi_values, &self.dxi_values),
        ))
    }
}

fn tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-10,
        atol: 1e-18,
        h_init: 1e-3,
        h_max: f64::INFINITY,
        max_steps: 50_000_000,
    }
}

fn system41_rhs(p: &CertificateParams) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    move |t, y| {
        let g = g_unchecked(p, t, y[1]);
        [g - p.delta * y[0], (p.c_const * y[0] + g) / p.gamma]
    }
}

fn sample_41(p: &CertificateParams, per_decade: usize) -> Result<Certificate> {
    let rhs = system41_rhs(p);
    let times = p.output_times(per_decade);
    let mut ode = Dopri5::new(&rhs, p.t_start, [p.eta, 0.0], tolerances());
    let mut q = Vec::with_capacity(times.len());
    let mut xi = Vec::with_capacity(times.len());
    let mut dq = Vec::with_capacity(times.len());
    let mut dxi = Vec::with_capacity(times.len());
    for &t in &times {
        ode.advance_to(t)?;
        let y = *ode.y();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at t={t}")));
        }
        let d = rhs(t, &y);
        q.push(y[0]);
        xi.push(y[1]);
        dq.push(d[0]);
        dxi.push(d[1]);
    }
    let mut cert = Certificate::from_samples(times, q, xi)?;
    cert.dq_values = dq;
    cert.dxi_values = dxi;
    Ok(cert)
}

/// Integrate `q̇ + δq = g_ε(t, ξ)`, `γξ̇ = Cq + g_ε(t, ξ)`, `q(T) = η`,
/// `ξ(T) = 0` to `t_final` and check the envelope. `K` is re-measured on a
/// sampling twice as dense and must agree within 1%.
pub fn integrate_system_41(p: &CertificateParams) -> Result<Certificate> {
    p.validate()?;
    let mut cert = sample_41(p, SAMPLES_PER_DECADE)?;
    let (pass, k) = check_envelope_42(&cert, p);
    let dense = sample_41(p, 2 * SAMPLES_PER_DECADE)?;
    let (pass_dense, k_dense) = check_envelope_42(&dense, p);
    let consistent = k == 0.0 && k_dense == 0.0 || (k_dense - k).abs() <= 0.01 * k;
    cert.envelope_pass = pass && pass_dense && consistent;
    cert.envelope_k = k.max(k_dense);
    Ok(cert)
}

/// Smallest `K` with `q(t) ≤ K(η + 1/(ε√T)) e^{-δ(t-T)/2} + K t^{-3/2}` and
/// `ξ(t) ≤ K(η + 1/(ε√T))` at every sample. Passes when `K` is finite and
/// the ratio defining it is not still growing at the end of the run (its
/// log-log slope over the last quarter of the samples stays below 0.05).
pub fn check_envelope_42(cert: &Certificate, p: &CertificateParams) -> (bool, f64) {
    let a = p.eta + 1.0 / (p.eps * p.t_start.sqrt());
    let mut k = 0.0f64;
    let mut ratios = Vec::with_capacity(cert.times.len());
    for ((&t, &q), &xi) in cert.times.iter().zip(&cert.q_values).zip(&cert.xi_values) {
        let env = a * (-0.5 * p.delta * (t - p.t_start)).exp() + t.powf(-1.5);
        let r = (q.max(0.0) / env).max(xi.max(0.0) / a);
        if !r.is_finite() || q < 0.0 && q.abs() > 1e-300 && !q.is_finite() {
            return (false, f64::INFINITY);
        }
        ratios.push((t, r));
        k = k.max(r);
    }
    if !k.is_finite() {
        return (false, f64::INFINITY);
    }
    let tail = &ratios[ratios.len() * 3 / 4..];
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    (slope < 0.05, k)
}

/// `ε(t)` for the linearized pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsFn {
    Constant {
        eps: f64,
    },
    /// `c / (1 + t)^p`.
    Power {
        c: f64,
        p: f64,
    },
}

impl EpsFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { eps } => eps,
            Self::Power { c, p } => c / (1.0 + t).powf(p),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { eps } => eps >= 0.0 && eps.is_finite(),
            Self::Power { c, p } => c >= 0.0 && p >= 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "eps function must be nonnegative and bounded: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub certificate: Certificate,
    /// Slope of `ln ξ` against `ln t` over the second half (in `ln t`) of the run.
    pub alpha: f64,
    pub q0: f64,
    pub xi0: f64,
}

/// Integrate `q̇ + (δ/4) q = ε(t) ξ / (c* t/2 - k ln t)`,
/// `ξ̇ = ((δ + F)/(γ + η)) q` from `(q0, ξ0)` at `T`, with `γ` playing `δ_M`.
pub fn integrate_system_310(
    p: &CertificateParams,
    eps_fn: EpsFn,
    q0: f64,
    xi0: f64,
) -> Result<GrowthReport> {
    p.validate()?;
    eps_fn.validate()?;
    let small = p.gamma.min(p.delta * p.gamma / (2.0 * p.f_lipschitz));
    if !(p.eta < small) {
        return Err(Error::Parameter(format!(
            "eta={} must stay below min(delta_M, delta delta_M / 2F) = {small}",
            p.eta
        )));
    }
    if !(0.5 * p.c_star * p.t_start - p.k * p.t_start.ln() > 0.0) {
        return Err(Error::Domain(
            "c* T/2 - k ln T must be positive".to_string(),
        ));
    }
    let m = (p.delta + p.f_lipschitz) / (p.gamma + p.eta);
    let rhs = |t: f64, y: &[f64; 2]| {
        let d = 0.5 * p.c_star * t - p.k * t.ln();
        [eps_fn.eval(t) * y[1] / d - 0.25 * p.delta * y[0], m * y[0]]
    };
    let times = p.output_times(SAMPLES_PER_DECADE);
    let mut ode = Dopri5::new(&rhs, p.t_start, [q0, xi0], tolerances());
    let (mut q, mut xi, mut dq, mut dxi) = (vec![], vec![], vec![], vec![]);
    for &t in &times {
        ode.advance_to(t)?;
        let y = *ode.y();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at t={t}")));
        }
        let d = rhs(t, &y);
        q.push(y[0]);
        xi.push(y[1]);
        dq.push(d[0]);
        dxi.push(d[1]);
    }
    let lt_mid = 0.5 * (p.t_start.ln() + p.t_final.ln());
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&xi)
        .filter(|(t, x)| t.ln() >= lt_mid && **x > 0.0)
        .map(|(t, x)| (t.ln(), x.ln()))
        .collect();
    let alpha = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        sxy / sxx
    } else {
        0.0
    };
    let mut cert = Certificate::from_samples(times, q, xi)?;
    cert.dq_values = dq;
    cert.dxi_values = dxi;
    Ok(GrowthReport {
        certificate: cert,
        alpha,
        q0,
        xi0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifiedShift {
    pub theta_grid: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub s_plus: Vec<f64>,
    pub s_minus: Vec<f64>,
    pub eps: f64,
    /// Offset constant: `s± = ρ_ε * s ± offset_const · ε`.
    pub offset_const: f64,
    /// `max |Δs/ΔΘ|` of the raw samples.
    pub lipschitz: f64,
    pub lipschitz_smoothed: f64,
    /// `max |Δ_Θ s±|` by second differences.
    pub laplacian_max: f64,
    pub gradient_bound_holds: bool,
    pub laplacian_bound_holds: bool,
}

impl MollifiedShift {
    /// Central-difference `∂_Θ s⁺` and `∂²_Θ s⁺` at sample `j`.
    pub fn derivatives(&self, j: usize) -> (f64, f64) {
        let n = self.s_plus.len();
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let (a, b, c) = (
            self.s_plus[(j + n - 1) % n],
            self.s_plus[j],
            self.s_plus[(j + 1) % n],
        );
        ((c - a) / (2.0 * h), (c - 2.0 * b + a) / (h * h))
    }
}

fn forward_lipschitz(s: &[f64], h: f64) -> f64 {
    let n = s.len();
    (0..n)
        .map(|j| (s[(j + 1) % n] - s[j]).abs() / h)
        .fold(0.0, f64::max)
}

/// Circular convolution of equispaced periodic samples with a smooth bump of
/// half-width `2ε` (so `‖ρ_ε'‖₁ ≤ 1/ε`), then `±2‖∇s‖ ε` offsets.
pub fn mollify_shift(s: &[f64], eps: f64) -> Result<MollifiedShift> {
    let n = s.len();
    if n < 4 {
        return Err(Error::Parameter(
            "need at least 4 shift samples".to_string(),
        ));
    }
    let h = 2.0 * std::f64::consts::PI / n as f64;
    if !(eps > h) {
        return Err(Error::Parameter(format!(
            "mollifier width {eps} is below the angular spacing {h}"
        )));
    }
    let w = (2.0 * eps).min(std::f64::consts::PI);
    let half = (w / h).floor() as usize;
    let mut weights: Vec<f64> = (0..=half)
        .map(|m| {
            let x = m as f64 * h / w;
            if x < 1.0 {
                (-1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
    weights.iter_mut().for_each(|v| *v /= total);
    let smoothed: Vec<f64> = (0..n)
        .map(|j| {
            let mut acc = weights[0] * s[j];
            for (m, &wm) in weights.iter().enumerate().skip(1) {
                acc += wm * (s[(j + m) % n] + s[(j + n * (m / n + 1) - m % n) % n]);
            }
            acc
        })
        .collect();
    let lipschitz = forward_lipschitz(s, h);
    let offset_const = 2.0 * lipschitz;
    let s_plus: Vec<f64> = smoothed.iter().map(|v| v + offset_const * eps).collect();
    let s_minus: Vec<f64> = smoothed.iter().map(|v| v - offset_const * eps).collect();
    let lipschitz_smoothed = forward_lipschitz(&smoothed, h);
    let laplacian_max = (0..n)
        .map(|j| {
            (smoothed[(j + 1) % n] - 2.0 * smoothed[j] + smoothed[(j + n - 1) % n]).abs() / (h * h)
        })
        .fold(0.0, f64::max);
    Ok(MollifiedShift {
        theta_grid: (0..n).map(|j| j as f64 * h).collect(),
        smoothed,
        s_plus,
        s_minus,
        eps,
        offset_const,
        lipschitz,
        lipschitz_smoothed,
        laplacian_max,
        gradient_bound_holds: lipschitz_smoothed <= lipschitz * (1.0 + 1e-12) + 1e-15,
        laplacian_bound_holds: laplacian_max <= lipschitz / eps * (1.0 + 1e-12) + 1e-15,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub residual_min: f64,
    /// `(t, ρ, Θ)` of the minimum.
    pub argmin: [f64; 3],
    /// Sufficient condition on `|ρ| ≥ M`: `q̇ + δq` dominates the forcing.
    pub condition_4_12_pass: bool,
    pub condition_4_12_margin: f64,
    /// Sufficient condition on `ρ ≤ M`: `δ_M ξ̇ - Cq` dominates the forcing.
    pub condition_4_14_pass: bool,
    pub condition_4_14_margin: f64,
    /// Every lattice point where both conditions hold has `NL ≥ -1e-8`.
    pub implication_holds: bool,
    pub lattice: LatticeSpec,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.residual_min >= -1e-8
    }
}

/// Default lattice: the certificate times with stride `t_stride`, and `ρ` on
/// `[-40, 40]` with `n_rho` nodes.
pub fn default_lattice(
    cert: &Certificate,
    t_stride: usize,
    n_rho: usize,
    n_theta: usize,
) -> LatticeSpec {
    let mut t_values: Vec<f64> = cert
        .times
        .iter()
        .step_by(t_stride.max(1))
        .copied()
        .collect();
    if t_values.last() != cert.times.last() {
        t_values.push(*cert.times.last().unwrap());
    }
    let rho_values = (0..n_rho)
        .map(|i| -40.0 + 80.0 * i as f64 / (n_rho - 1) as f64)
        .collect();
    LatticeSpec {
        t_values,
        rho_values,
        n_theta,
    }
}

#[derive(Clone, Copy)]
struct PointValue {
    nl: f64,
    m412: f64,
    m414: f64,
    implication_ok: bool,
}

/// Evaluate `NL[ū]` for `ū = U*(ρ) + q(t)`, `ρ = r + s⁺_ε(Θ) - ξ(t)`, at every
/// lattice point, with `q̇, ξ̇` from the right-hand sides of the ODE pair.
/// `sign = -1` flips `q` (and `q̇`) for the sanity check.
pub fn supersolution_residual(
    profile: &WaveProfile,
    gaps: &GapConstants,
    shift: &MollifiedShift,
    cert: &Certificate,
    p: &CertificateParams,
    lattice: &LatticeSpec,
    sign: f64,
) -> Result<ResidualReport> {
    if lattice.n_theta != shift.s_plus.len() {
        return Err(Error::Parameter(
            "lattice angles must match the shift samples".to_string(),
        ));
    }
    let f = profile.nonlinearity();
    let n1 = p.n_dim as f64 - 1.0;
    let derivs: Vec<(f64, f64)> = (0..lattice.n_theta).map(|j| shift.derivatives(j)).collect();
    let lip = shift.lipschitz;
    let per_t: Vec<Result<(PointValue, [f64; 3])>> = lattice
        .t_values
        .par_iter()
        .map(|&t| {
            let (q, xi) = cert.interpolate(t)?;
            let g = g_eps(p, t, xi)?;
            let dq = g - p.delta * q;
            let dxi = (p.c_const * q + g) / p.gamma;
            let (q, dq) = (sign * q, sign * dq);
            let frame = p.frame_radius(t);
            let mut best = PointValue {
                nl: f64::INFINITY,
                m412: f64::INFINITY,
                m414: f64::INFINITY,
                implication_ok: true,
            };
            let mut arg = [t, 0.0, 0.0];
            for &rho in &lattice.rho_values {
                let (u, du, ddu) = profile.eval(rho);
                let react = f.eval(u) - f.eval(u + q);
                for (j, &(ds, dds)) in derivs.iter().enumerate() {
                    let radius = rho + frame + xi - shift.s_plus[j];
                    if !(radius > 0.0) {
                        return Err(Error::Domain(format!(
                            "lattice point (t={t}, rho={rho}) lies at radius {radius}"
                        )));
                    }
                    let drift = n1 / radius - p.k / t;
                    let nl = -dxi * du + dq + react
                        - drift * du
                        - (du * dds + ddu * ds * ds) / (radius * radius);
                    let forcing = lip / (p.eps * radius * radius) + drift.abs();
                    let m412 = if rho.abs() >= gaps.m_window {
                        dq + p.delta * q - forcing
                    } else {
                        f64::INFINITY
                    };
                    let m414 = if rho <= gaps.m_window {
                        gaps.delta_m * dxi - p.c_const * q - forcing
                    } else {
                        f64::INFINITY
                    };
                    let both = (rho.abs() < gaps.m_window || m412 >= 0.0)
                        && (rho > gaps.m_window || m414 >= 0.0);
                    if both && nl < -1e-8 {
                        best.implication_ok = false;
                    }
                    best.m412 = best.m412.min(m412);
                    best.m414 = best.m414.min(m414);
                    if nl < best.nl {
                        best.nl = nl;
                        arg = [t, rho, shift.theta_grid[j]];
                    }
                }
            }
            Ok((best, arg))
        })
        .collect();
    let mut total = PointValue {
        nl: f64::INFINITY,
        m412: f64::INFINITY,
        m414: f64::INFINITY,
        implication_ok: true,
    };
    let mut argmin = [0.0; 3];
    for item in per_t {
        let (v, arg) = item?;
        if v.nl < total.nl {
            total.nl = v.nl;
            argmin = arg;
        }
        total.m412 = total.m412.min(v.m412);
        total.m414 = total.m414.min(v.m414);
        total.implication_ok &= v.implication_ok;
    }
    Ok(ResidualReport {
        residual_min: total.nl,
        argmin,
        condition_4_12_pass: total.m412 >= 0.0,
        condition_4_12_margin: total.m412,
        condition_4_14_pass: total.m414 >= 0.0,
        condition_4_14_margin: total.m414,
        implication_holds: total.implication_ok,
        lattice: lattice.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_vanishes_on_the_log_curve() {
        let p = CertificateParams::reference();
        for i in 0..1000 {
            let t = 1e3 * (1.0 + i as f64);
            let g = g_eps(&p, t, p.k * t.ln()).unwrap();
            assert!(g <= 1e-12 * p.c_const / p.eps * p.k / t, "{t} {g}");
        }
    }

    #[test]
    fn g_is_small_at_zero_shift() {
        let p = CertificateParams::reference();
        // leading term (C/ε) k² ln t / (c* t²), relative correction k ln t / (c* t)
        for t in [1e3, 1e4, 1e5, 1e6] {
            let g = g_eps(&p, t, 0.0).unwrap();
            let lead = p.c_const / p.eps * p.k * p.k * t.ln() / (p.c_star * t * t);
            let rel = p.k * t.ln() / (p.c_star * t);
            assert!(g > lead && g < lead * (1.0 + 2.0 * rel), "{t} {g} {lead}");
        }
    }

    #[test]
    fn g_without_curvature_is_zero() {
        let mut p = CertificateParams::reference();
        p.n_dim = 1;
        p.k = 0.0;
        assert_eq!(g_eps(&p, 2e3, 5.0).unwrap(), 0.0);
        assert!(matches!(
            g_eps(&CertificateParams::reference(), 1e3, -1e4),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn params_domain_condition() {
        let mut p = CertificateParams::reference();
        p.t_start = 50.0;
        assert!(matches!(p.validate(), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_forcing_gives_zero_trajectories() {
        let mut p = CertificateParams::reference();
        p.eta = 0.0;
        p.c_const = 0.0;
        p.t_final = 1e4;
        let c = integrate_system_41(&p).unwrap();
        assert!(c.q_values.iter().chain(&c.xi_values).all(|&v| v == 0.0));
    }

    #[test]
    fn envelope_synthetic_cases() {
        let p = CertificateParams::reference();
        let ts: Vec<f64> = (0..200).map(|i| p.t_start * 1.05f64.powi(i)).collect();
        let decay: Vec<f64> = ts
            .iter()
            .map(|t| (-p.delta * (t - p.t_start)).exp())
            .collect();
        let c = Certificate::from_samples(ts.clone(), decay, vec![0.0; ts.len()]).unwrap();
        let (pass, k) = check_envelope_42(&c, &p);
        let a = p.eta + 1.0 / (p.eps * p.t_start.sqrt());
        assert!(pass && k <= 1.0 / a * (1.0 + 1e-12));
        let slow: Vec<f64> = ts.iter().map(|t| 1.0 / t.sqrt()).collect();
        let c = Certificate::from_samples(ts.clone(), slow, vec![0.0; ts.len()]).unwrap();
        assert!(!check_envelope_42(&c, &p).0);
    }

    #[test]
    fn linearized_pair_decouples_without_eps() {
        let mut p = CertificateParams::reference();
        p.delta = 0.125;
        p.gamma = 0.0358;
        p.eta = 0.001;
        p.t_final = 2e3;
        let r = integrate_system_310(&p, EpsFn::Constant { eps: 0.0 }, 1.0, 1.0).unwrap();
        let c = &r.certificate;
        for (t, q) in c.times.iter().zip(&c.q_values) {
            let exact = (-0.25 * p.delta * (t - p.t_start)).exp();
            assert!((q - exact).abs() < 1e-8);
        }
        let m = (p.delta + p.f_lipschitz) / (p.gamma + p.eta);
        let xi_inf = 1.0 + m * 4.0 / p.delta;
        assert!((c.xi_values.last().unwrap() - xi_inf).abs() < 1e-6);
    }

    #[test]
    fn linearized_pair_rejects_large_eta() {
        let mut p = CertificateParams::reference();
        p.gamma = 0.0358;
        p.delta = 0.125;
        assert!(integrate_system_310(&p, EpsFn::Constant { eps: 0.01 }, 1.0, 1.0).is_err());
    }

    #[test]
    fn mollifier_preserves_constants() {
        let s = vec![2.5; 128];
        let m = mollify_shift(&s, 0.1).unwrap();
        assert!(m.smoothed.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert_eq!(m.lipschitz, 0.0);
        assert!(mollify_shift(&s, 0.01).is_err());
    }

    #[test]
    fn mollifier_bounds_on_kink() {
        let n = 512;
        let s: Vec<f64> = (0..n)
            .map(|j| {
                (2.0 * std::f64::consts::PI * j as f64 / n as f64)
                    .sin()
                    .abs()
            })
            .collect();
        for eps in [0.05, 0.1, 0.3] {
            let m = mollify_shift(&s, eps).unwrap();
            assert!(
                m.gradient_bound_holds && m.laplacian_bound_holds,
                "{eps} {m:?}"
            );
        }
    }
}
