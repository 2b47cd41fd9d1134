//! Radially symmetric solutions of `u_t = Δu + f(u)` in the lab frame
//! (`r ∈ [0, r_max]`) and in the frame moving like `R(t) = c* t - k ln t`.
//!
//! Time stepping is IMEX: diffusion and drift are implicit (one tridiagonal
//! solve per step, central differences, upwinded where the cell Péclet number
//! exceeds 2), the reaction is explicit Euler. With `dt · F ≤ 1` the step is
//! a monotone map of `[0, 1]` into itself, so ordered data stay ordered.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::front_analysis::{track_level_set, FrontHistory};
use crate::nonlinearity::BistableNonlinearity;
use crate::tridiag;
use crate::wave_profile::WaveProfile;

/// Tolerance on excursions outside `[0, 1]` before they count as a failure.
const RANGE_TOL: f64 = 1e-6;
pub const DEFAULT_WINDOW_WIDTH: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    Moving,
}

/// Uniform nodes `origin + i·dr`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialGrid {
    pub origin: f64,
    pub dr: f64,
    pub n: usize,
}

impl RadialGrid {
    pub fn new(origin: f64, dr: f64, n: usize) -> Result<Self> {
        if !(dr > 0.0) || n < 3 {
            return Err(Error::Parameter(format!(
                "grid needs dr > 0 and at least 3 nodes (dr={dr}, n={n})"
            )));
        }
        Ok(Self { origin, dr, n })
    }

    /// Lab grid `[0, r_max]`.
    pub fn lab(r_max: f64, dr: f64) -> Result<Self> {
        Self::new(0.0, dr, (r_max / dr).round() as usize + 1)
    }

    /// Window `[lo, lo + width]`.
    pub fn window(lo: f64, width: f64, dr: f64) -> Result<Self> {
        Self::new(lo, dr, (width / dr).round() as usize + 1)
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.dr
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn last(&self) -> f64 {
        self.node(self.n - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    BallIndicator,
    SmoothedBall {
        width: f64,
    },
    /// `max(1_{B_R1}, U*(r - (R1+R2)/2) · 1_{B_R2})`: the wave profile
    /// truncated at the outer ball.
    ProfileCap,
}

/// Initial datum `u₀(r)` with `1_{B_R1} ≤ u₀ ≤ 1_{B_R2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialDatum {
    pub kind: InitialKind,
    pub r1: f64,
    pub r2: f64,
}

impl InitialDatum {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            InitialKind::BallIndicator => self.r1 > 0.0 && self.r1 <= self.r2,
            InitialKind::SmoothedBall { width } => {
                self.r1 > 0.0 && self.r1 < self.r2 && width > 0.0
            }
            InitialKind::ProfileCap => self.r1 > 0.0 && self.r1 < self.r2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "initial datum needs 0 < R1 < R2 (R1 = R2 allowed for an indicator): {self:?}"
            )))
        }
    }

    /// `u₀(r)`; `dr` decides which node counts as the cut cell of an
    /// indicator.
    pub fn value(&self, r: f64, dr: f64, profile: Option<&WaveProfile>) -> Result<f64> {
        let r = r.abs();
        Ok(match self.kind {
            InitialKind::BallIndicator => {
                let radius = self.r1;
                if (r - radius).abs() < 1e-9 * dr {
                    0.5
                } else if r < radius {
                    1.0
                } else {
                    0.0
                }
            }
            InitialKind::SmoothedBall { width } => {
                if r <= self.r1 {
                    1.0
                } else if r >= self.r2 {
                    0.0
                } else {
                    let mid = 0.5 * (self.r1 + self.r2);
                    let g = |x: f64| ((mid - x) / width).tanh();
                    ((g(r) - g(self.r2)) / (g(self.r1) - g(self.r2))).clamp(0.0, 1.0)
                }
            }
            InitialKind::ProfileCap => {
                let p = profile.ok_or_else(|| {
                    Error::Parameter("profile_cap datum needs a wave profile".to_string())
                })?;
                if r <= self.r1 {
                    1.0
                } else if r > self.r2 {
                    0.0
                } else {
                    p.eval(r - 0.5 * (self.r1 + self.r2)).0
                }
            }
        })
    }
}

/// Solver state. `u` lives on `grid`; in the moving frame node `x` sits at
/// physical radius `x + c* t - k ln t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialState {
    pub frame: Frame,
    pub t: f64,
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub n_dim: usize,
    pub c_star: f64,
    pub k_shift: f64,
}

impl RadialState {
    /// `R(t) = c* t - k ln t` (zero in the lab frame).
    pub fn frame_offset(&self) -> f64 {
        frame_offset(self.frame, self.c_star, self.k_shift, self.t)
    }

    /// Lab-frame radius of node `i`.
    pub fn physical_radius(&self, i: usize) -> f64 {
        self.grid.node(i) + self.frame_offset()
    }
}

pub fn frame_offset(frame: Frame, c_star: f64, k: f64, t: f64) -> f64 {
    match frame {
        Frame::Lab => 0.0,
        Frame::Moving => c_star * t - k * t.ln(),
    }
}

/// `min_{t ≥ t0} (c* t - k ln t)`.
pub fn min_frame_offset(c_star: f64, k: f64, t0: f64) -> f64 {
    let t_star = if c_star > 0.0 {
        (k / c_star).max(t0)
    } else {
        t0
    };
    c_star * t_star - k * t_star.ln()
}

/// Equation parameters shared by every state of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RadialModel {
    pub f: BistableNonlinearity,
    pub n_dim: usize,
    pub c_star: f64,
    /// Frame shift coefficient `k`; `(N-1)/c*` unless deliberately detuned.
    pub k_shift: f64,
    /// Coefficient of `∂_r u / r`; `N - 1` unless overridden.
    pub curvature: f64,
}

impl RadialModel {
    pub fn new(f: BistableNonlinearity, n_dim: usize, c_star: f64) -> Result<Self> {
        if n_dim < 1 || !(c_star > 0.0) {
            return Err(Error::Parameter(format!(
                "need N >= 1 and c* > 0 (N={n_dim}, c*={c_star})"
            )));
        }
        let curvature = (n_dim - 1) as f64;
        Ok(Self {
            f,
            n_dim,
            c_star,
            k_shift: curvature / c_star,
            curvature,
        })
    }

    /// Frame with a mis-specified `k`, for drift experiments.
    pub fn with_frame_k(mut self, k: f64) -> Self {
        self.k_shift = k;
        self
    }

    pub fn with_curvature(mut self, curvature: f64) -> Self {
        self.curvature = curvature;
        self
    }

    /// Drift coefficient multiplying `∂_r u` at grid coordinate `x`.
    #[inline]
    pub fn drift(&self, frame: Frame, x: f64, t: f64) -> f64 {
        match frame {
            Frame::Lab => {
                if x > 0.0 {
                    self.curvature / x
                } else {
                    0.0
                }
            }
            Frame::Moving => {
                self.c_star + self.curvature / (x + self.c_star * t - self.k_shift * t.ln())
                    - self.k_shift / t
            }
        }
    }

    /// Largest drift magnitude on the grid at time `t`.
    pub fn max_drift(&self, frame: Frame, grid: &RadialGrid, t: f64) -> f64 {
        match frame {
            Frame::Lab => {
                // (N-1)/r is largest at the first node off the axis
                let first = (0..grid.n).map(|i| grid.node(i)).find(|&x| x > 0.0);
                first.map_or(0.0, |x| self.drift(frame, x, t).abs())
            }
            Frame::Moving => {
                let a = self.drift(frame, grid.node(0), t).abs();
                let b = self.drift(frame, grid.last(), t).abs();
                a.max(b)
            }
        }
    }

    /// `min(0.9 dr / |c_max|, 1.8 / F)` at time `t`.
    pub fn stability_bound(&self, frame: Frame, grid: &RadialGrid, t: f64) -> f64 {
        let c_max = self.max_drift(frame, grid, t);
        let adv = if c_max > 0.0 {
            0.9 * grid.dr / c_max
        } else {
            f64::INFINITY
        };
        adv.min(1.8 / self.f.f_lipschitz())
    }

    /// A step size satisfying the stability bound on `[t0, t1]` and the
    /// monotonicity condition `dt · F ≤ 1` of the explicit reaction.
    pub fn monotone_dt(&self, frame: Frame, grid: &RadialGrid, t0: f64, t1: f64) -> f64 {
        let mut dt = 1.0 / self.f.f_lipschitz();
        let samples = 200;
        for i in 0..=samples {
            let t = t0 * (t1 / t0).powf(i as f64 / samples as f64);
            dt = dt.min(self.stability_bound(frame, grid, t));
        }
        dt
    }

    fn check_window(&self, frame: Frame, grid: &RadialGrid, t: f64) -> Result<()> {
        if frame == Frame::Moving {
            let edge = -(self.c_star * t - self.k_shift * t.ln());
            if grid.origin <= edge {
                return Err(Error::Domain(format!(
                    "moving window left edge {} is not inside the physical domain r > {edge} at t={t}",
                    grid.origin
                )));
            }
        }
        Ok(())
    }

    /// State at `t = 1` built from `datum`.
    pub fn build_initial(
        &self,
        datum: &InitialDatum,
        frame: Frame,
        grid: RadialGrid,
        profile: Option<&WaveProfile>,
    ) -> Result<RadialState> {
        datum.validate()?;
        if frame == Frame::Lab && grid.origin != 0.0 {
            return Err(Error::Parameter("lab grid must start at r = 0".to_string()));
        }
        let t = 1.0;
        self.check_window(frame, &grid, t)?;
        let offset = frame_offset(frame, self.c_star, self.k_shift, t);
        if datum.r2 >= grid.last() + offset {
            return Err(Error::Parameter(format!(
                "outer radius R2={} does not fit inside the grid (r_max={})",
                datum.r2,
                grid.last() + offset
            )));
        }
        let u = (0..grid.n)
            .map(|i| datum.value(grid.node(i) + offset, grid.dr, profile))
            .collect::<Result<Vec<_>>>()?;
        let state = RadialState {
            frame,
            t,
            grid,
            u,
            n_dim: self.n_dim,
            c_star: self.c_star,
            k_shift: self.k_shift,
        };
        check_sandwich(&state, datum)?;
        Ok(state)
    }

    /// State from explicit values, for tests and restarts.
    pub fn state_from_values(
        &self,
        frame: Frame,
        t: f64,
        grid: RadialGrid,
        u: Vec<f64>,
    ) -> Result<RadialState> {
        if u.len() != grid.n {
            return Err(Error::Parameter(
                "value count does not match the grid".to_string(),
            ));
        }
        Ok(RadialState {
            frame,
            t,
            grid,
            u,
            n_dim: self.n_dim,
            c_star: self.c_star,
            k_shift: self.k_shift,
        })
    }

    pub fn step(&self, state: &RadialState, dt: f64) -> Result<RadialState> {
        let mut next = state.clone();
        let mut ws = Workspace::new(state.grid.n);
        self.step_in_place(&mut next, dt, &mut ws)?;
        Ok(next)
    }

    pub fn step_lab(&self, state: &RadialState, dt: f64) -> Result<RadialState> {
        if state.frame != Frame::Lab {
            return Err(Error::Parameter(
                "step_lab needs a lab-frame state".to_string(),
            ));
        }
        self.step(state, dt)
    }

    pub fn step_moving(&self, state: &RadialState, dt: f64) -> Result<RadialState> {
        if state.frame != Frame::Moving {
            return Err(Error::Parameter(
                "step_moving needs a moving-frame state".to_string(),
            ));
        }
        self.step(state, dt)
    }

    pub fn step_in_place(
        &self,
        state: &mut RadialState,
        dt: f64,
        ws: &mut Workspace,
    ) -> Result<()> {
        let bound = self.stability_bound(state.frame, &state.grid, state.t);
        if !(dt > 0.0) || dt > bound {
            return Err(Error::StepSize { dt, bound });
        }
        let t_mid = state.t + 0.5 * dt;
        self.check_window(state.frame, &state.grid, state.t + dt)?;
        for (r, &u) in ws.rhs.iter_mut().zip(&state.u) {
            *r = u + dt * self.f.eval(u);
        }
        self.assemble(state.frame, &state.grid, t_mid, dt, ws);
        ws.solve(&mut state.u);
        finish_step(&mut state.u)?;
        state.t += dt;
        Ok(())
    }

    /// Fill the implicit operator `I - dt (∂_rr + b ∂_r)` and apply the
    /// boundary rows to `ws.rhs`.
    pub(crate) fn assemble(
        &self,
        frame: Frame,
        grid: &RadialGrid,
        t_mid: f64,
        dt: f64,
        ws: &mut Workspace,
    ) {
        let n = grid.n;
        let dr = grid.dr;
        let d = dt / (dr * dr);
        for i in 1..n - 1 {
            let b = self.drift(frame, grid.node(i), t_mid);
            let (lo, di, up) = implicit_row(d, dt * b / dr);
            ws.lower[i] = lo;
            ws.diag[i] = di;
            ws.upper[i] = up;
        }
        match frame {
            Frame::Lab => {
                // symmetric axis: (1 + (N-1)) u_rr with the ghost node u_{-1} = u_1
                let a = 2.0 * (1.0 + self.curvature) * d;
                ws.lower[0] = 0.0;
                ws.diag[0] = 1.0 + a;
                ws.upper[0] = -a;
            }
            Frame::Moving => {
                ws.lower[0] = 0.0;
                ws.diag[0] = 1.0;
                ws.upper[0] = 0.0;
                ws.rhs[0] = 1.0;
            }
        }
        ws.lower[n - 1] = 0.0;
        ws.diag[n - 1] = 1.0;
        ws.upper[n - 1] = 0.0;
        ws.rhs[n - 1] = 0.0;
    }
}

/// Row of `I - dt(∂_rr + b ∂_r)` with `d = dt/dr²`, `p = dt·b/dr`.
#[inline]
fn implicit_row(d: f64, p: f64) -> (f64, f64, f64) {
    if p.abs() <= 2.0 * d {
        (-d + 0.5 * p, 1.0 + 2.0 * d, -d - 0.5 * p)
    } else if p > 0.0 {
        (-d, 1.0 + 2.0 * d + p, -d - p)
    } else {
        (-d + p, 1.0 + 2.0 * d - p, -d)
    }
}

pub(crate) fn finish_step(u: &mut [f64]) -> Result<()> {
    for v in u.iter_mut() {
        if !v.is_finite() || *v < -RANGE_TOL || *v > 1.0 + RANGE_TOL {
            return Err(Error::Integration(format!("solution left [0,1]: {v}")));
        }
        *v = v.clamp(0.0, 1.0);
    }
    Ok(())
}

/// Scratch buffers for one tridiagonal solve.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub(crate) lower: Vec<f64>,
    pub(crate) diag: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    pub(crate) fn solve(&mut self, out: &mut [f64]) {
        tridiag::solve_into(
            &self.lower,
            &self.diag,
            &self.upper,
            &self.rhs,
            out,
            &mut self.scratch,
        );
    }
}

fn check_sandwich(state: &RadialState, datum: &InitialDatum) -> Result<()> {
    let offset = state.frame_offset();
    for (i, &u) in state.u.iter().enumerate() {
        let r = state.grid.node(i) + offset;
        let lower = if r < datum.r1 - 1e-9 * state.grid.dr {
            1.0
        } else {
            0.0
        };
        let upper = if r <= datum.r2 + 1e-9 * state.grid.dr {
            1.0
        } else {
            0.0
        };
        if !(lower..=upper).contains(&u) {
            return Err(Error::Invariant(format!(
                "initial datum violates 1_(B_R1) <= u0 <= 1_(B_R2) at r={r} (u0={u})"
            )));
        }
    }
    Ok(())
}

/// Default moving window `[lo, lo + 120]`: centred on `center` when possible,
/// pushed right so that its left edge stays at physical radius at least
/// `min_radius` for all `t ≥ 1`.
pub fn default_moving_window(
    model: &RadialModel,
    center: f64,
    min_radius: f64,
    dr: f64,
) -> Result<RadialGrid> {
    let floor = min_radius - min_frame_offset(model.c_star, model.k_shift, 1.0);
    let lo = (center - 0.5 * DEFAULT_WINDOW_WIDTH).max(floor);
    let lo = (lo / dr).ceil() * dr;
    RadialGrid::window(lo, DEFAULT_WINDOW_WIDTH, dr)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub snapshots: Vec<RadialState>,
    pub history: FrontHistory,
}

/// Advance to `t_final` with step at most `dt`, storing a snapshot at each
/// requested time (and at `t_final`) and tracking the `level` set there.
/// Between consecutive snapshots the step is uniform.
pub fn run(
    model: &RadialModel,
    state: &RadialState,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
    level: f64,
) -> Result<RunOutput> {
    if t_final < state.t {
        return Err(Error::Parameter(format!(
            "t_final={t_final} precedes the state time {}",
            state.t
        )));
    }
    let mut times: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > state.t && s < t_final)
        .collect();
    times.push(t_final);
    times.dedup();
    let mut cur = state.clone();
    let mut ws = Workspace::new(cur.grid.n);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut history = FrontHistory::new(level, None);
    for &target in &times {
        let span = target - cur.t;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                model.step_in_place(&mut cur, h, &mut ws)?;
            }
            cur.t = target;
        }
        let x = track_level_set(&cur.u, cur.grid.origin, cur.grid.dr, level, None)?;
        history.push(cur.t, x + cur.frame_offset())?;
        snapshots.push(cur.clone());
    }
    Ok(RunOutput { snapshots, history })
}
