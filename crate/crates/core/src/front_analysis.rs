//! Level-set tracking and fits of the logarithmic law
//! `r_λ(t) = c t - k ln t + s`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial_solver::RadialState;
use crate::wave_profile::WaveProfile;

/// Minimum number of samples a default fit accepts.
pub const MIN_FIT_SAMPLES: usize = 10;

/// Position of the unique crossing of `level` by `u` on the nodes
/// `origin + i·dr`, restricted to the index band `[lo, hi]` when given.
/// Linear interpolation between the bracketing nodes.
pub fn track_level_set(
    u: &[f64],
    origin: f64,
    dr: f64,
    level: f64,
    band: Option<(usize, usize)>,
) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::Tracking("need at least two nodes".to_string()));
    }
    let (lo, hi) = band.unwrap_or((0, u.len() - 1));
    let hi = hi.min(u.len() - 1);
    if lo >= hi {
        return Err(Error::Tracking(format!("empty search band [{lo}, {hi}]")));
    }
    let mut found: Option<f64> = None;
    let mut count = 0usize;
    let mut i = lo;
    while i <= hi {
        let a = u[i] - level;
        if a == 0.0 {
            count += 1;
            found = Some(origin + i as f64 * dr);
            // a run of exact hits counts once
            while i < hi && u[i + 1] - level == 0.0 {
                i += 1;
            }
        } else if i < hi {
            let b = u[i + 1] - level;
            if a * b < 0.0 {
                count += 1;
                let w = a / (a - b);
                found = Some(origin + (i as f64 + w) * dr);
            }
        }
        i += 1;
    }
    match (count, found) {
        (1, Some(x)) => Ok(x),
        (0, _) => Err(Error::Tracking(format!("level {level} is never crossed"))),
        (n, _) => Err(Error::Tracking(format!(
            "level {level} is crossed {n} times"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontHistory {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub level: f64,
    pub angle_index: Option<usize>,
}

impl FrontHistory {
    pub fn new(level: f64, angle_index: Option<usize>) -> Self {
        Self {
            times: Vec::new(),
            positions: Vec::new(),
            level,
            angle_index,
        }
    }

    pub fn from_samples(times: Vec<f64>, positions: Vec<f64>, level: f64) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(Error::Parameter(
                "times and positions differ in length".to_string(),
            ));
        }
        let mut h = Self::new(level, None);
        for (t, r) in times.into_iter().zip(positions) {
            h.push(t, r)?;
        }
        Ok(h)
    }

    pub fn push(&mut self, t: f64, position: f64) -> Result<()> {
        if !t.is_finite() || !position.is_finite() {
            return Err(Error::Tracking(format!(
                "non-finite sample ({t}, {position})"
            )));
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::Tracking(format!(
                    "times must increase strictly ({t} after {last})"
                )));
            }
        }
        self.times.push(t);
        self.positions.push(position);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation of the position at `t`.
    pub fn position_at(&self, t: f64) -> Result<f64> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] {
            return Err(Error::Domain(format!("t={t} outside the recorded history")));
        }
        let j = self.times.partition_point(|&s| s < t);
        if self.times[j] == t {
            return Ok(self.positions[j]);
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let w = (t - t0) / (t1 - t0);
        Ok((1.0 - w) * self.positions[j - 1] + w * self.positions[j])
    }

    /// `r - c t + k ln t` at every sample.
    pub fn moving_positions(&self, c: f64, k: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.positions)
            .map(|(&t, &r)| r - c * t + k * t.ln())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Full,
    FixedSpeed,
}

impl std::str::FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "fixed_speed" => Ok(Self::FixedSpeed),
            _ => Err(Error::Parameter(format!("unknown fit mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub mode: FitMode,
    pub c_star: Option<f64>,
    /// Defaults to `[t_hi/4, t_hi]`.
    pub window: Option<(f64, f64)>,
    pub min_samples: usize,
}

impl FitOptions {
    pub fn full() -> Self {
        Self {
            mode: FitMode::Full,
            c_star: None,
            window: None,
            min_samples: MIN_FIT_SAMPLES,
        }
    }

    pub fn fixed_speed(c_star: f64) -> Self {
        Self {
            mode: FitMode::FixedSpeed,
            c_star: Some(c_star),
            window: None,
            min_samples: MIN_FIT_SAMPLES,
        }
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontFit {
    pub c_fit: f64,
    pub k_fit: f64,
    pub s_fit: f64,
    pub residual_rms: f64,
    pub window: [f64; 2],
    pub mode: FitMode,
    pub samples: usize,
    /// Residual of the control fit without the logarithm (basis `{t, 1}` in
    /// full mode, `{1}` for the delay in fixed-speed mode).
    pub control_rms: f64,
}

/// Least squares `A x ≈ b` through an SVD of the column-scaled design.
fn least_squares(cols: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = b.len();
    let n = cols.len();
    if m < n {
        return Err(Error::Fit(format!(
            "{m} samples cannot determine {n} coefficients"
        )));
    }
    let scale: Vec<f64> = cols
        .iter()
        .map(|c| {
            c.iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let a = DMatrix::from_fn(m, n, |i, j| cols[j][i] / scale[j]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::Fit(format!(
            "rank-deficient design (singular values {smin:e} .. {smax:e})"
        )));
    }
    let rhs = DVector::from_column_slice(b);
    let y = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Fit(format!("least squares failed: {e}")))?;
    let resid = &a * &y - &rhs;
    let rms = (resid.norm_squared() / m as f64).sqrt();
    let x = (0..n).map(|j| y[j] / scale[j]).collect();
    Ok((x, rms))
}

/// Fit `r_λ(t) = c t - k ln t + s` over a time window of `h`.
pub fn fit_log_shift(h: &FrontHistory, opts: &FitOptions) -> Result<FrontFit> {
    if h.is_empty() {
        return Err(Error::Fit("empty history".to_string()));
    }
    let t_hi_all = *h.times.last().unwrap();
    let (lo, hi) = opts.window.unwrap_or((0.25 * t_hi_all, t_hi_all));
    let (ts, rs): (Vec<f64>, Vec<f64>) = h
        .times
        .iter()
        .zip(&h.positions)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &r)| (t, r))
        .unzip();
    if ts.len() < opts.min_samples.max(2) {
        return Err(Error::Fit(format!(
            "{} samples in window [{lo}, {hi}], need {}",
            ts.len(),
            opts.min_samples
        )));
    }
    if ts.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Fit("times must be positive".to_string()));
    }
    let ln: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ones = vec![1.0; ts.len()];
    let fit = match opts.mode {
        FitMode::Full => {
            let neg_ln: Vec<f64> = ln.iter().map(|v| -v).collect();
            let (x, rms) = least_squares(&[ts.clone(), neg_ln, ones.clone()], &rs)?;
            let (_, control_rms) = least_squares(&[ts.clone(), ones], &rs)?;
            FrontFit {
                c_fit: x[0],
                k_fit: x[1],
                s_fit: x[2],
                residual_rms: rms,
                window: [lo, hi],
                mode: FitMode::Full,
                samples: ts.len(),
                control_rms,
            }
        }
        FitMode::FixedSpeed => {
            let c = opts
                .c_star
                .ok_or_else(|| Error::Parameter("fixed_speed mode needs c*".to_string()))?;
            // delay d = c t - r = k ln t - s
            let d: Vec<f64> = ts.iter().zip(&rs).map(|(&t, &r)| c * t - r).collect();
            let (x, rms) = least_squares(&[ln, ones.clone()], &d)?;
            let (_, control_rms) = least_squares(&[ones], &d)?;
            FrontFit {
                c_fit: c,
                k_fit: x[0],
                s_fit: -x[1],
                residual_rms: rms,
                window: [lo, hi],
                mode: FitMode::FixedSpeed,
                samples: ts.len(),
                control_rms,
            }
        }
    };
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub window: [f64; 2],
    pub x_start: f64,
    pub x_end: f64,
    /// `x_λ(t_hi) - x_λ(t_lo)`.
    pub drift: f64,
    /// Least-squares slope of `x_λ` against `ln t` on the window.
    pub slope_ln_t: f64,
}

/// Drift of the front in the frame `x = r - c t + k ln t` over
/// `window` (default `[t_hi/2, t_hi]`).
pub fn moving_frame_drift(
    h: &FrontHistory,
    c: f64,
    k: f64,
    window: Option<(f64, f64)>,
) -> Result<DriftReport> {
    if h.len() < 2 {
        return Err(Error::Tracking("need at least two samples".to_string()));
    }
    let t_last = *h.times.last().unwrap();
    let (lo, hi) = window.unwrap_or((0.5 * t_last, t_last));
    let x_at = |t: f64| -> Result<f64> { Ok(h.position_at(t)? - c * t + k * t.ln()) };
    let x_start = x_at(lo)?;
    let x_end = x_at(hi)?;
    let pts: Vec<(f64, f64)> = h
        .times
        .iter()
        .zip(h.moving_positions(c, k))
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, x)| (t.ln(), x))
        .collect();
    let slope_ln_t = if pts.len() >= 2 {
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
    Ok(DriftReport {
        window: [lo, hi],
        x_start,
        x_end,
        drift: x_end - x_start,
        slope_ln_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichSample {
    pub t: f64,
    /// Shift pinning `U*` at the tracked half level.
    pub s_half: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    /// `sup |u - U*(z - s_ref)|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    /// First snapshot time used; earlier snapshots are transient.
    pub t0: f64,
    pub s_ref: f64,
    pub c_fit: f64,
    pub samples: Vec<SandwichSample>,
    pub sup_s_plus: f64,
    pub inf_s_minus: f64,
    pub variation_plus: f64,
    pub variation_minus: f64,
    pub stabilized: bool,
    /// Largest `(u - U*(z - sup s₊))₊ · t / ln t` over the used snapshots.
    pub max_upper_excess_ratio: f64,
    /// Largest `(U*(z - inf s₋) - u)₊ · t / ln t`.
    pub max_lower_excess_ratio: f64,
}

impl SandwichReport {
    pub fn gap(&self) -> f64 {
        self.sup_s_plus - self.inf_s_minus
    }
}

const SANDWICH_SEARCH: f64 = 20.0;
const STABILIZED_VARIATION: f64 = 0.1;

/// Per snapshot, the smallest `s₊` and largest `s₋` with
/// `U*(z - s₋) - C ln t/t ≤ u ≤ U*(z - s₊) + C ln t/t`, `z = r - c* t + k ln t`.
/// `C` is fitted once as the largest `t/ln t · sup|u - U*(z - s_ref)|`, where
/// `s_ref` is the half-level position at the last snapshot.
pub fn verify_radial_sandwich(
    snapshots: &[RadialState],
    profile: &WaveProfile,
    t0: f64,
) -> Result<SandwichReport> {
    let used: Vec<&RadialState> = snapshots
        .iter()
        .filter(|s| s.t >= t0 && s.t > 1.0)
        .collect();
    if used.len() < 2 {
        return Err(Error::Sandwich(format!(
            "fewer than two snapshots after t0={t0}"
        )));
    }
    let c = profile.c_star;
    let zs = |s: &RadialState| -> Vec<f64> {
        let k = (s.n_dim - 1) as f64 / c;
        let shift = c * s.t - k * s.t.ln();
        (0..s.grid.n)
            .map(|i| s.physical_radius(i) - shift)
            .collect()
    };
    let mut pinned = Vec::with_capacity(used.len());
    for s in &used {
        let z = zs(s);
        let x = track_level_set(&s.u, z[0], s.grid.dr, 0.5, None)?;
        pinned.push((z, x, 0.0));
    }
    let s_ref = pinned.last().unwrap().1;
    let mut c_fit = 0.0f64;
    for (s, (z, _, dev)) in used.iter().zip(pinned.iter_mut()) {
        *dev = z
            .iter()
            .zip(&s.u)
            .map(|(&zi, &ui)| (ui - profile.eval(zi - s_ref).0).abs())
            .fold(0.0, f64::max);
        c_fit = c_fit.max(*dev * s.t / s.t.ln());
    }
    let mut samples = Vec::with_capacity(used.len());
    for (s, (z, x, dev)) in used.iter().zip(&pinned) {
        let eps = c_fit * s.t.ln() / s.t;
        let upper_ok = |sh: f64| {
            z.iter()
                .zip(&s.u)
                .all(|(&zi, &ui)| ui <= profile.eval(zi - sh).0 + eps)
        };
        let lower_ok = |sh: f64| {
            z.iter()
                .zip(&s.u)
                .all(|(&zi, &ui)| profile.eval(zi - sh).0 - eps <= ui)
        };
        let (a, b) = (x - SANDWICH_SEARCH, x + SANDWICH_SEARCH);
        if !upper_ok(b) || !lower_ok(a) {
            return Err(Error::Sandwich(format!(
                "no finite shift within ±{SANDWICH_SEARCH} at t={}",
                s.t
            )));
        }
        // upper_ok is monotone increasing in the shift, lower_ok decreasing
        let s_plus = bisect_threshold(a, b, upper_ok);
        let s_minus = bisect_threshold(a, b, |sh| !lower_ok(sh));
        samples.push(SandwichSample {
            t: s.t,
            s_half: *x,
            s_minus,
            s_plus,
            deviation: *dev,
        });
    }
    let sup_s_plus = samples
        .iter()
        .map(|s| s.s_plus)
        .fold(f64::NEG_INFINITY, f64::max);
    let inf_s_minus = samples
        .iter()
        .map(|s| s.s_minus)
        .fold(f64::INFINITY, f64::min);
    let t_end = samples.last().unwrap().t;
    let t_first = samples[0].t;
    let late: Vec<&SandwichSample> = samples
        .iter()
        .filter(|s| s.t >= 0.5 * (t_first + t_end))
        .collect();
    let spread = |f: fn(&SandwichSample) -> f64| {
        let vals: Vec<f64> = late.iter().map(|s| f(s)).collect();
        vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let variation_plus = spread(|s| s.s_plus);
    let variation_minus = spread(|s| s.s_minus);
    let mut max_upper_excess_ratio = 0.0f64;
    let mut max_lower_excess_ratio = 0.0f64;
    for (s, (z, _, _)) in used.iter().zip(&pinned) {
        let w = s.t / s.t.ln();
        for (&zi, &ui) in z.iter().zip(&s.u) {
            let up = ui - profile.eval(zi - sup_s_plus).0;
            let lo = profile.eval(zi - inf_s_minus).0 - ui;
            max_upper_excess_ratio = max_upper_excess_ratio.max(up * w);
            max_lower_excess_ratio = max_lower_excess_ratio.max(lo * w);
        }
    }
    Ok(SandwichReport {
        t0,
        s_ref,
        c_fit,
        sup_s_plus,
        inf_s_minus,
        variation_plus,
        variation_minus,
        stabilized: variation_plus < STABILIZED_VARIATION && variation_minus < STABILIZED_VARIATION,
        samples,
        max_upper_excess_ratio,
        max_lower_excess_ratio,
    })
}

/// Smallest `s ∈ [a, b]` with `pred(s)` for a predicate that is false then
/// true; `pred(b)` must hold.
fn bisect_threshold(mut a: f64, mut b: f64, pred: impl Fn(f64) -> bool) -> f64 {
    if pred(a) {
        return a;
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if pred(m) {
            b = m;
        } else {
            a = m;
        }
        if b - a < 1e-12 {
            break;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_between_bracketing_nodes() {
        let u = [1.0, 0.6, 0.4, 0.0];
        assert_eq!(track_level_set(&u, 0.0, 1.0, 0.5, None).unwrap(), 1.5);
    }

    #[test]
    fn exact_node_value_is_returned() {
        let u = [1.0, 0.8, 0.5, 0.1, 0.0];
        assert_eq!(track_level_set(&u, 2.0, 0.5, 0.5, None).unwrap(), 3.0);
    }

    #[test]
    fn zero_or_multiple_crossings_fail() {
        assert!(matches!(
            track_level_set(&[0.9, 0.8, 0.7], 0.0, 1.0, 0.5, None),
            Err(Error::Tracking(_))
        ));
        assert!(matches!(
            track_level_set(&[0.9, 0.1, 0.9, 0.1], 0.0, 1.0, 0.5, None),
            Err(Error::Tracking(_))
        ));
        assert!(track_level_set(&[0.9, 0.1, 0.9, 0.1], 0.0, 1.0, 0.5, Some((2, 3))).is_ok());
    }

    #[test]
    fn history_rejects_non_increasing_times() {
        let mut h = FrontHistory::new(0.5, None);
        h.push(1.0, 2.0).unwrap();
        assert!(h.push(1.0, 3.0).is_err());
        assert!(h.push(2.0, f64::NAN).is_err());
    }

    fn synthetic(c: f64, k: f64, s: f64) -> FrontHistory {
        let ts: Vec<f64> = (1..=10).map(|i| 100.0 * i as f64).collect();
        let rs = ts.iter().map(|&t| c * t - k * t.ln() + s).collect();
        FrontHistory::from_samples(ts, rs, 0.5).unwrap()
    }

    #[test]
    fn full_fit_recovers_noiseless_law() {
        let h = synthetic(0.3535534, 2.8284271, 1.0);
        let fit = fit_log_shift(&h, &FitOptions::full().with_window(100.0, 1000.0)).unwrap();
        assert!((fit.c_fit - 0.3535534).abs() < 1e-9);
        assert!((fit.k_fit - 2.8284271).abs() < 1e-9);
        assert!((fit.s_fit - 1.0).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn fixed_speed_fit_recovers_noiseless_law() {
        let h = synthetic(0.3535534, 2.8284271, 1.0);
        let opts = FitOptions::fixed_speed(0.3535534).with_window(100.0, 1000.0);
        let fit = fit_log_shift(&h, &opts).unwrap();
        assert_eq!(fit.c_fit, 0.3535534);
        assert!((fit.k_fit - 2.8284271).abs() < 1e-9);
        assert!((fit.s_fit - 1.0).abs() < 1e-9);
        assert!(fit.control_rms > 1.0);
    }

    #[test]
    fn short_window_is_rejected() {
        let h = synthetic(0.35, 2.8, 1.0);
        assert!(matches!(
            fit_log_shift(&h, &FitOptions::full().with_window(900.0, 1000.0)),
            Err(Error::Fit(_))
        ));
        let mut opts = FitOptions::full().with_window(900.0, 1000.0);
        opts.min_samples = 2;
        assert!(matches!(fit_log_shift(&h, &opts), Err(Error::Fit(_))));
    }

    #[test]
    fn drift_of_stationary_and_unshifted_fronts() {
        let c = 0.3535534;
        let k = 2.8284271;
        let h = synthetic(c, k, 1.0);
        let d = moving_frame_drift(&h, c, k, None).unwrap();
        assert!(d.drift.abs() < 1e-12);
        let wrong = moving_frame_drift(&h, c, 0.0, None).unwrap();
        assert!((wrong.drift + k * 2.0f64.ln()).abs() < 1e-9);
        assert!((wrong.slope_ln_t + k).abs() < 1e-9);
    }
}
