//! The planar (`N = 2`) problem on a moving radial window times the circle.
//!
//! Each step treats radial diffusion and drift implicitly, one tridiagonal
//! solve per angle, and the reaction and the angular diffusion
//! `Δ_Θ u / (x + c* t - k ln t)²` explicitly. Angles are solved
//! independently, so the result does not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::front_analysis::track_level_set;
use crate::radial_solver::{
    finish_step, frame_offset, Frame, RadialGrid, RadialModel, RadialState, Workspace,
};
use crate::tridiag;
use crate::wave_profile::WaveProfile;

pub const DEFAULT_ANGLES: usize = 256;
/// Default radial window width for planar runs.
pub const DEFAULT_WINDOW_WIDTH_2D: f64 = 70.0;
/// Smallest physical radius the default window reaches.
pub const DEFAULT_MIN_RADIUS_2D: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SupportShape {
    /// `{x²/a² + y²/b² ≤ 1}`.
    Ellipse { a: f64, b: f64 },
    /// `{r ≤ r̄ (1 + ε cos(m Θ))}`.
    Star { r_bar: f64, eps: f64, m: u32 },
}

impl SupportShape {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Ellipse { a, b } => a > 0.0 && b > 0.0,
            Self::Star { r_bar, eps, m } => r_bar > 0.0 && (0.0..1.0).contains(&eps) && m >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid support shape {self:?}")))
        }
    }

    /// Boundary radius in direction `theta`.
    pub fn boundary_radius(&self, theta: f64) -> f64 {
        match *self {
            Self::Ellipse { a, b } => {
                let (s, c) = theta.sin_cos();
                a * b / ((b * c).powi(2) + (a * s).powi(2)).sqrt()
            }
            Self::Star { r_bar, eps, m } => r_bar * (1.0 + eps * (m as f64 * theta).cos()),
        }
    }

    /// Radii `(R1, R2)` of the inscribed and circumscribed balls.
    pub fn radius_bounds(&self) -> (f64, f64) {
        match *self {
            Self::Ellipse { a, b } => (a.min(b), a.max(b)),
            Self::Star { r_bar, eps, .. } => (r_bar * (1.0 - eps), r_bar * (1.0 + eps)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "edge", rename_all = "snake_case")]
pub enum Edge {
    /// Exact indicator, half value on a node lying on the boundary.
    Sharp,
    /// `(1 - tanh((r - R(Θ))/w)) / 2`, cut to `1` inside `R1` and `0` outside `R2`.
    Smoothed { width: f64 },
}

/// Solution on `window × S¹`; `u[j * nr + i]` is the value at radial node `i`
/// and angle `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarField {
    pub t: f64,
    pub r_grid: RadialGrid,
    pub theta_grid: Vec<f64>,
    pub u: Vec<f64>,
    pub c_star: f64,
    pub k_shift: f64,
}

/// Finite-difference fields derived from `u`, same layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarDiagnostics {
    /// `V = -∂_r u`.
    pub v: Vec<f64>,
    pub u_theta: Vec<f64>,
    pub u_theta_theta: Vec<f64>,
}

impl PolarField {
    pub fn nr(&self) -> usize {
        self.r_grid.n
    }

    pub fn n_angles(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn d_theta(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.n_angles() as f64
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let nr = self.nr();
        &self.u[j * nr..(j + 1) * nr]
    }

    pub fn frame_offset(&self) -> f64 {
        frame_offset(Frame::Moving, self.c_star, self.k_shift, self.t)
    }

    /// Angle `j` as a radial moving-frame state.
    pub fn radial_state(&self, j: usize) -> RadialState {
        RadialState {
            frame: Frame::Moving,
            t: self.t,
            grid: self.r_grid,
            u: self.column(j).to_vec(),
            n_dim: 2,
            c_star: self.c_star,
            k_shift: self.k_shift,
        }
    }

    pub fn diagnostics(&self) -> PolarDiagnostics {
        let nr = self.nr();
        let nj = self.n_angles();
        let dr = self.r_grid.dr;
        let dth = self.d_theta();
        let mut v = vec![0.0; self.u.len()];
        let mut u_theta = vec![0.0; self.u.len()];
        let mut u_theta_theta = vec![0.0; self.u.len()];
        for j in 0..nj {
            let col = self.column(j);
            let prev = self.column((j + nj - 1) % nj);
            let next = self.column((j + 1) % nj);
            for i in 0..nr {
                let du = if i == 0 {
                    (col[1] - col[0]) / dr
                } else if i == nr - 1 {
                    (col[i] - col[i - 1]) / dr
                } else {
                    (col[i + 1] - col[i - 1]) / (2.0 * dr)
                };
                v[j * nr + i] = -du;
                u_theta[j * nr + i] = (next[i] - prev[i]) / (2.0 * dth);
                u_theta_theta[j * nr + i] = (next[i] - 2.0 * col[i] + prev[i]) / (dth * dth);
            }
        }
        PolarDiagnostics {
            v,
            u_theta,
            u_theta_theta,
        }
    }
}

/// Planar model: the radial model with `N = 2` in the moving frame.
#[derive(Debug, Clone, Serialize)]
pub struct PolarModel {
    pub radial: RadialModel,
}

impl PolarModel {
    pub fn new(radial: RadialModel) -> Result<Self> {
        if radial.n_dim != 2 {
            return Err(Error::Parameter(format!(
                "the angular solver is planar, got N={}",
                radial.n_dim
            )));
        }
        Ok(Self { radial })
    }

    /// Largest angular diffusion coefficient `1/(x + R(t))²` on the window.
    pub fn angular_coefficient_max(&self, grid: &RadialGrid, t: f64) -> f64 {
        let r =
            grid.origin + frame_offset(Frame::Moving, self.radial.c_star, self.radial.k_shift, t);
        1.0 / (r * r)
    }

    /// Radial bound of the moving frame combined with the explicit angular
    /// diffusion bound `dΘ² / (2 a_max)`.
    pub fn stability_bound(&self, grid: &RadialGrid, n_angles: usize, t: f64) -> f64 {
        let dth = 2.0 * std::f64::consts::PI / n_angles as f64;
        let a = self.angular_coefficient_max(grid, t);
        self.radial
            .stability_bound(Frame::Moving, grid, t)
            .min(dth * dth / (2.0 * a))
    }

    /// Step size on `[t0, t1]` under the stability bound and the monotonicity
    /// condition `dt (F + 2 a_max / dΘ²) ≤ 1`.
    pub fn monotone_dt(&self, grid: &RadialGrid, n_angles: usize, t0: f64, t1: f64) -> f64 {
        let dth = 2.0 * std::f64::consts::PI / n_angles as f64;
        let f_lip = self.radial.f.f_lipschitz();
        let samples = 50;
        let mut dt = f64::INFINITY;
        for i in 0..=samples {
            let t = t0 * (t1 / t0).powf(i as f64 / samples as f64);
            let a = self.angular_coefficient_max(grid, t);
            dt = dt
                .min(self.stability_bound(grid, n_angles, t))
                .min(1.0 / (f_lip + 2.0 * a / (dth * dth)));
        }
        dt
    }

    /// Field at `t = 1` from a (possibly smoothed) indicator of `shape`.
    pub fn build_initial_2d(
        &self,
        shape: &SupportShape,
        edge: Edge,
        grid: RadialGrid,
        n_angles: usize,
    ) -> Result<PolarField> {
        shape.validate()?;
        if n_angles < 4 {
            return Err(Error::Parameter(format!(
                "need at least 4 angles, got {n_angles}"
            )));
        }
        if let Edge::Smoothed { width } = edge {
            if !(width > 0.0) {
                return Err(Error::Parameter(
                    "smoothing width must be positive".to_string(),
                ));
            }
        }
        let m = &self.radial;
        let t = 1.0;
        let offset = frame_offset(Frame::Moving, m.c_star, m.k_shift, t);
        if grid.origin + offset <= 0.0 {
            return Err(Error::Domain(format!(
                "window left edge {} is not at positive radius at t=1",
                grid.origin
            )));
        }
        let (r1, r2) = shape.radius_bounds();
        if grid.origin + offset >= r1 || grid.last() + offset <= r2 {
            return Err(Error::Parameter(format!(
                "window [{}, {}] does not contain the support boundary between {r1} and {r2}",
                grid.origin + offset,
                grid.last() + offset
            )));
        }
        let dth = 2.0 * std::f64::consts::PI / n_angles as f64;
        let theta_grid: Vec<f64> = (0..n_angles).map(|j| j as f64 * dth).collect();
        let nr = grid.n;
        let mut u = vec![0.0; nr * n_angles];
        for (j, &th) in theta_grid.iter().enumerate() {
            let rb = shape.boundary_radius(th);
            if rb < r1 - 1e-9 || rb > r2 + 1e-9 {
                return Err(Error::Parameter(format!(
                    "support boundary {rb} at angle {th} leaves [{r1}, {r2}]"
                )));
            }
            for i in 0..nr {
                let r = grid.node(i) + offset;
                let val = match edge {
                    Edge::Sharp => {
                        if (r - rb).abs() < 1e-9 * grid.dr {
                            0.5
                        } else if r < rb {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Edge::Smoothed { width } => {
                        if r <= r1 {
                            1.0
                        } else if r >= r2 {
                            0.0
                        } else {
                            0.5 * (1.0 - ((r - rb) / width).tanh())
                        }
                    }
                };
                u[j * nr + i] = val;
            }
        }
        Ok(PolarField {
            t,
            r_grid: grid,
            theta_grid,
            u,
            c_star: m.c_star,
            k_shift: m.k_shift,
        })
    }

    pub fn step_2d(&self, field: &PolarField, dt: f64) -> Result<PolarField> {
        let mut next = field.clone();
        let mut scratch = StepScratch::new(field.nr());
        self.step_in_place(&mut next, dt, &mut scratch)?;
        Ok(next)
    }

    pub fn step_in_place(
        &self,
        field: &mut PolarField,
        dt: f64,
        ws: &mut StepScratch,
    ) -> Result<()> {
        if field.t < 1.0 {
            return Err(Error::Domain(format!(
                "planar steps need t >= 1, got {}",
                field.t
            )));
        }
        let nj = field.n_angles();
        let nr = field.nr();
        let bound = self.stability_bound(&field.r_grid, nj, field.t);
        if !(dt > 0.0) || dt > bound {
            return Err(Error::StepSize { dt, bound });
        }
        let m = &self.radial;
        let grid = field.r_grid;
        let offset = field.frame_offset();
        let inv_dth2 = 1.0 / (field.d_theta() * field.d_theta());
        // angular diffusion coefficient per radial node, explicit at time t
        let ang: Vec<f64> = (0..nr)
            .map(|i| {
                let r = grid.node(i) + offset;
                dt * inv_dth2 / (r * r)
            })
            .collect();
        let t_mid = field.t + 0.5 * dt;
        m.assemble(Frame::Moving, &grid, t_mid, dt, &mut ws.op);
        let (rhs0, rhs_last) = (ws.op.rhs[0], ws.op.rhs[nr - 1]);
        let old = &field.u;
        let f = &m.f;
        let op = &ws.op;
        ws.next.resize(old.len(), 0.0);
        ws.next.par_chunks_mut(nr).enumerate().for_each_init(
            || (vec![0.0; nr], vec![0.0; nr]),
            |(rhs, scratch), (j, out)| {
                let col = &old[j * nr..(j + 1) * nr];
                let prev = &old[((j + nj - 1) % nj) * nr..][..nr];
                let next = &old[((j + 1) % nj) * nr..][..nr];
                for i in 0..nr {
                    let u = col[i];
                    rhs[i] = u + dt * f.eval(u) + ang[i] * (next[i] - 2.0 * u + prev[i]);
                }
                rhs[0] = rhs0;
                rhs[nr - 1] = rhs_last;
                tridiag::solve_into(&op.lower, &op.diag, &op.upper, rhs, out, scratch);
            },
        );
        finish_step(&mut ws.next)?;
        std::mem::swap(&mut field.u, &mut ws.next);
        field.t += dt;
        Ok(())
    }
}

/// Reusable buffers for planar steps.
#[derive(Debug, Clone)]
pub struct StepScratch {
    op: Workspace,
    next: Vec<f64>,
}

impl StepScratch {
    pub fn new(nr: usize) -> Self {
        Self {
            op: Workspace::new(nr),
            next: Vec::new(),
        }
    }
}

/// Default planar window `[lo, lo + 70]`, kept at physical radius at least
/// 10 for all `t ≥ 1`.
pub fn default_planar_window(model: &PolarModel, dr: f64) -> Result<RadialGrid> {
    let m = &model.radial;
    let floor =
        DEFAULT_MIN_RADIUS_2D - crate::radial_solver::min_frame_offset(m.c_star, m.k_shift, 1.0);
    let lo = (floor / dr).ceil() * dr;
    RadialGrid::window(lo, DEFAULT_WINDOW_WIDTH_2D, dr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    Fixed(f64),
    /// Per snapshot interval, the largest monotone step not above `dt_max`.
    Monotone {
        dt_max: f64,
    },
}

/// Advance `field` to `t_final`, calling `observe` at each snapshot time and
/// at `t_final`. Between consecutive snapshots the step is uniform.
pub fn run_2d(
    model: &PolarModel,
    field: &PolarField,
    t_final: f64,
    policy: StepPolicy,
    snapshot_times: &[f64],
    mut observe: impl FnMut(&PolarField) -> Result<()>,
) -> Result<PolarField> {
    if t_final < field.t {
        return Err(Error::Parameter(format!(
            "t_final={t_final} precedes the field time {}",
            field.t
        )));
    }
    let mut times: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > field.t && s < t_final)
        .collect();
    times.push(t_final);
    times.dedup();
    let mut cur = field.clone();
    let mut ws = StepScratch::new(cur.nr());
    for &target in &times {
        let span = target - cur.t;
        if span > 0.0 {
            let dt = match policy {
                StepPolicy::Fixed(dt) => dt,
                StepPolicy::Monotone { dt_max } => {
                    dt_max.min(model.monotone_dt(&cur.r_grid, cur.n_angles(), cur.t, target))
                }
            };
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                model.step_in_place(&mut cur, h, &mut ws)?;
            }
            cur.t = target;
        }
        observe(&cur)?;
    }
    Ok(cur)
}

/// `max |u_θ|` over nodes with moving coordinate `x ≥ -c* t / 2`.
pub fn angular_gradient_max(field: &PolarField) -> f64 {
    let d = field.diagnostics();
    let nr = field.nr();
    let x_min = -0.5 * field.c_star * field.t;
    let mut best = 0.0f64;
    for (idx, g) in d.u_theta.iter().enumerate() {
        if field.r_grid.node(idx % nr) >= x_min {
            best = best.max(g.abs());
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngularShift {
    pub theta_grid: Vec<f64>,
    pub s_values: Vec<f64>,
    pub lipschitz_estimate: f64,
}

impl AngularShift {
    pub fn range(&self) -> f64 {
        let max = self
            .s_values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let min = self.s_values.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Per angle, `s(Θ) = U*⁻¹(λ) - x_λ(Θ)` from the moving-frame crossing of
/// `level`, searched in the coordinate band `band` (whole window if `None`).
pub fn extract_angular_shift(
    field: &PolarField,
    level: f64,
    profile: &WaveProfile,
    band: Option<(f64, f64)>,
) -> Result<AngularShift> {
    let grid = field.r_grid;
    let idx_band = band.map(|(a, b)| {
        let lo = ((a - grid.origin) / grid.dr).floor().max(0.0) as usize;
        let hi = (((b - grid.origin) / grid.dr).ceil().max(0.0) as usize).min(grid.n - 1);
        (lo, hi)
    });
    let xi = profile.inverse(level)?;
    let mut s_values = Vec::with_capacity(field.n_angles());
    for (j, th) in field.theta_grid.iter().enumerate() {
        let x = track_level_set(field.column(j), grid.origin, grid.dr, level, idx_band)
            .map_err(|e| Error::Tracking(format!("angle {th}: {e}")))?;
        s_values.push(xi - x);
    }
    let nj = s_values.len();
    let dth = field.d_theta();
    let lipschitz_estimate = (0..nj)
        .map(|j| (s_values[(j + 1) % nj] - s_values[j]).abs() / dth)
        .fold(0.0, f64::max);
    Ok(AngularShift {
        theta_grid: field.theta_grid.clone(),
        s_values,
        lipschitz_estimate,
    })
}

/// `sup_{x,Θ} |u - U*(x + s(Θ))|`.
pub fn sup_error_vs_shifted_wave(
    field: &PolarField,
    shift: &AngularShift,
    profile: &WaveProfile,
) -> f64 {
    let mut err = 0.0f64;
    for (j, &s) in shift.s_values.iter().enumerate() {
        for (i, &u) in field.column(j).iter().enumerate() {
            let x = field.r_grid.node(i);
            err = err.max((u - profile.eval(x + s).0).abs());
        }
    }
    err
}

/// `min V` over the nodes with `|x + s(Θ)| ≤ m_window`.
pub fn min_slope_near_front(field: &PolarField, shift: &AngularShift, m_window: f64) -> f64 {
    let d = field.diagnostics();
    let nr = field.nr();
    let mut best = f64::INFINITY;
    for (j, &s) in shift.s_values.iter().enumerate() {
        for i in 1..nr - 1 {
            if (field.r_grid.node(i) + s).abs() <= m_window {
                best = best.min(d.v[j * nr + i]);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarSnapshotReport {
    pub t: f64,
    pub grad_theta_max: f64,
    pub sup_err_vs_shifted_wave: f64,
    pub min_v_window: f64,
    pub laplace_theta_max: f64,
    pub shift_range: f64,
    pub lipschitz_estimate: f64,
}

/// Diagnostics row for one snapshot, with the shift taken at level 1/2.
pub fn snapshot_report(
    field: &PolarField,
    profile: &WaveProfile,
    m_window: f64,
) -> Result<(PolarSnapshotReport, AngularShift)> {
    let shift = extract_angular_shift(field, 0.5, profile, None)?;
    let d = field.diagnostics();
    let nr = field.nr();
    let x_min = -0.5 * field.c_star * field.t;
    let laplace_theta_max = d
        .u_theta_theta
        .iter()
        .enumerate()
        .filter(|(idx, _)| field.r_grid.node(idx % nr) >= x_min)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    let report = PolarSnapshotReport {
        t: field.t,
        grad_theta_max: angular_gradient_max(field),
        sup_err_vs_shifted_wave: sup_error_vs_shifted_wave(field, &shift, profile),
        min_v_window: min_slope_near_front(field, &shift, m_window),
        laplace_theta_max,
        shift_range: shift.range(),
        lipschitz_estimate: shift.lipschitz_estimate,
    };
    Ok((report, shift))
}
