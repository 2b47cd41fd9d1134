use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Experiment configuration. Every key is optional in the TOML file; missing
/// keys take the defaults below, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Space dimension `N`.
    pub dim: usize,
    /// Seed for randomized checks.
    pub seed: u64,
    pub nonlinearity: NonlinearityConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    pub shape: ShapeConfig,
    pub fit: FitConfig,
    pub certificate: CertificateConfig,
    pub report: ReportConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// `cubic` for `u(u-θ)(1-u)`, `table` for a tabulated `f`.
    pub kind: String,
    pub theta: f64,
    /// CSV with columns `u,f`, for `kind = "table"`.
    pub table_path: Option<PathBuf>,
    /// Tolerance of the travelling-wave solve.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Radial spacing of the one-dimensional runs.
    pub dr: f64,
    /// Radial spacing of the polar runs.
    pub dr_polar: f64,
    /// Number of angles `J`, so `dΘ = 2π/J`.
    pub n_angles: usize,
    /// Width of the moving window in one dimension.
    pub window_width: f64,
    /// Width of the moving window of the polar runs.
    pub window_width_polar: f64,
    /// Smallest physical radius of the window's left edge, one dimension.
    pub min_radius: f64,
    /// Smallest physical radius of the window's left edge, polar runs.
    pub min_radius_polar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Runs start at `t = 1`.
    pub t_start: f64,
    pub t_final: f64,
    /// Largest step of the one-dimensional runs (cut to the monotone bound).
    pub dt: f64,
    /// Largest step of the polar runs (cut to the monotone bound).
    pub dt_polar: f64,
    /// Cadence of front tracking and polar diagnostics.
    pub snapshot_every: f64,
    /// Cadence of full radial profiles in `snapshots.csv`.
    pub field_every: f64,
    /// Cadence of `field_t*.csv` dumps in polar runs.
    pub field_every_polar: f64,
    /// `lab` or `moving`.
    pub frame: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// `profile_cap`, `ball_indicator` or `smoothed_ball`.
    pub kind: String,
    pub r1: f64,
    pub r2: f64,
    /// Transition width of `smoothed_ball`.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeConfig {
    /// `ellipse` (semi-axes `a`, `b`) or `star` (`r = a (1 + eps cos(mΘ))`).
    pub kind: String,
    pub a: f64,
    pub b: f64,
    pub m: u32,
    pub eps: f64,
    /// `sharp` or `smoothed`.
    pub edge: String,
    pub edge_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// `fixed_speed` or `full`.
    pub mode: String,
    pub level: f64,
    /// Defaults to `t_final / 4`.
    pub window_lo: Option<f64>,
    /// Defaults to `t_final`.
    pub window_hi: Option<f64>,
    /// Speed for `fixed_speed`; defaults to the computed `c*`.
    pub c_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateConfig {
    /// `41` (decay pair) or `310` (growth pair).
    pub system: String,
    pub eps: f64,
    /// Defaults to `10⁴/ε²`.
    pub t_start: Option<f64>,
    /// Defaults to `100 T` (decay) or `10 T` (growth).
    pub t_final: Option<f64>,
    /// Defaults to `0.01` (decay) or `0.001` (growth).
    pub eta: Option<f64>,
    /// Initial data of the growth pair.
    pub q0: f64,
    pub xi0: f64,
    /// `shift.csv` of a polar run; enables the residual check.
    pub shift_path: Option<PathBuf>,
    pub lattice_t_stride: usize,
    pub lattice_n_rho: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Relative tolerance of `k_fit` against `(N-1)/c*`.
    pub k_tolerance: f64,
    /// Tolerance of `c*` against the closed form of the cubic.
    pub c_tolerance: f64,
    /// Also run the polar pipeline and the residual check.
    pub polar: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Run directory; defaults to `runs/<unix time>-<config hash>`.
    pub dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            seed: 0,
            nonlinearity: NonlinearityConfig::default(),
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            initial: InitialConfig::default(),
            shape: ShapeConfig::default(),
            fit: FitConfig::default(),
            certificate: CertificateConfig::default(),
            report: ReportConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            kind: "cubic".into(),
            theta: 0.25,
            table_path: None,
            tol: 1e-10,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dr: 0.05,
            dr_polar: 0.1,
            n_angles: 256,
            window_width: 120.0,
            window_width_polar: 70.0,
            min_radius: 1.0,
            min_radius_polar: 10.0,
        }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_start: 1.0,
            t_final: 400.0,
            dt: 0.01,
            dt_polar: 0.05,
            snapshot_every: 5.0,
            field_every: 50.0,
            field_every_polar: 200.0,
            frame: "moving".into(),
        }
    }
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: "profile_cap".into(),
            r1: 6.0,
            r2: 10.0,
            width: 1.0,
        }
    }
}

impl Default for ShapeConfig {
    fn default() -> Self {
        Self {
            kind: "ellipse".into(),
            a: 30.0,
            b: 20.0,
            m: 3,
            eps: 0.2,
            edge: "sharp".into(),
            edge_width: 1.0,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: "fixed_speed".into(),
            level: 0.5,
            window_lo: None,
            window_hi: None,
            c_star: None,
        }
    }
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            system: "41".into(),
            eps: 0.1,
            t_start: None,
            t_final: None,
            eta: None,
            q0: 1e-3,
            xi0: 1.0,
            shift_path: None,
            lattice_t_stride: 5,
            lattice_n_rho: 161,
        }
    }
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            k_tolerance: 0.05,
            c_tolerance: 1e-6,
            polar: false,
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn one_of(key: &str, v: &str, allowed: &[&str]) -> Result<(), CliError> {
    if allowed.contains(&v) {
        Ok(())
    } else {
        Err(bad(key, format!("must be one of {allowed:?}, got {v:?}")))
    }
}

impl ExperimentConfig {
    /// Parse TOML text; an empty string gives the defaults.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.dim < 1 {
            return Err(bad("dim", "must be at least 1"));
        }
        let n = &self.nonlinearity;
        one_of("nonlinearity.kind", &n.kind, &["cubic", "table"])?;
        if n.kind == "cubic" && !(n.theta > 0.0 && n.theta < 0.5) {
            return Err(bad(
                "nonlinearity.theta",
                format!("must lie in (0, 1/2), got {}", n.theta),
            ));
        }
        if n.kind == "table" && n.table_path.is_none() {
            return Err(bad(
                "nonlinearity.table_path",
                "required when kind = \"table\"",
            ));
        }
        positive("nonlinearity.tol", n.tol)?;

        let g = &self.grid;
        positive("grid.dr", g.dr)?;
        positive("grid.dr_polar", g.dr_polar)?;
        positive("grid.window_width", g.window_width)?;
        positive("grid.window_width_polar", g.window_width_polar)?;
        positive("grid.min_radius", g.min_radius)?;
        positive("grid.min_radius_polar", g.min_radius_polar)?;
        if g.n_angles < 4 {
            return Err(bad(
                "grid.n_angles",
                format!("must be at least 4, got {}", g.n_angles),
            ));
        }

        let t = &self.time;
        if t.t_start != 1.0 {
            return Err(bad(
                "time.t_start",
                format!("runs start at t = 1, got {}", t.t_start),
            ));
        }
        if !(t.t_final > t.t_start) {
            return Err(bad(
                "time.t_final",
                format!("must exceed t_start = 1, got {}", t.t_final),
            ));
        }
        positive("time.dt", t.dt)?;
        positive("time.dt_polar", t.dt_polar)?;
        positive("time.snapshot_every", t.snapshot_every)?;
        positive("time.field_every", t.field_every)?;
        positive("time.field_every_polar", t.field_every_polar)?;
        one_of("time.frame", &t.frame, &["lab", "moving"])?;

        let i = &self.initial;
        one_of(
            "initial.kind",
            &i.kind,
            &["profile_cap", "ball_indicator", "smoothed_ball"],
        )?;
        positive("initial.r1", i.r1)?;
        if i.kind == "ball_indicator" {
            if i.r2 < i.r1 {
                return Err(bad(
                    "initial.r2",
                    format!("must be at least r1 = {}, got {}", i.r1, i.r2),
                ));
            }
        } else if !(i.r2 > i.r1) {
            return Err(bad(
                "initial.r2",
                format!("must exceed r1 = {}, got {}", i.r1, i.r2),
            ));
        }
        positive("initial.width", i.width)?;

        let s = &self.shape;
        one_of("shape.kind", &s.kind, &["ellipse", "star"])?;
        one_of("shape.edge", &s.edge, &["sharp", "smoothed"])?;
        positive("shape.a", s.a)?;
        positive("shape.edge_width", s.edge_width)?;
        if s.kind == "ellipse" {
            positive("shape.b", s.b)?;
        } else {
            if !(0.0..1.0).contains(&s.eps) {
                return Err(bad(
                    "shape.eps",
                    format!("must lie in [0, 1), got {}", s.eps),
                ));
            }
            if s.m < 1 {
                return Err(bad("shape.m", "must be at least 1"));
            }
        }

        let f = &self.fit;
        one_of("fit.mode", &f.mode, &["fixed_speed", "full"])?;
        if !(f.level > 0.0 && f.level < 1.0) {
            return Err(bad(
                "fit.level",
                format!("must lie in (0, 1), got {}", f.level),
            ));
        }
        if let (Some(lo), Some(hi)) = (f.window_lo, f.window_hi) {
            if !(hi > lo) {
                return Err(bad(
                    "fit.window_hi",
                    format!("must exceed window_lo = {lo}, got {hi}"),
                ));
            }
        }
        if let Some(c) = f.c_star {
            positive("fit.c_star", c)?;
        }

        let c = &self.certificate;
        one_of("certificate.system", &c.system, &["41", "310"])?;
        positive("certificate.eps", c.eps)?;
        if let Some(v) = c.t_start {
            positive("certificate.t_start", v)?;
        }
        if let Some(v) = c.t_final {
            positive("certificate.t_final", v)?;
        }
        if let Some(v) = c.eta {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(
                    "certificate.eta",
                    format!("must be nonnegative, got {v}"),
                ));
            }
        }
        if c.lattice_t_stride < 1 {
            return Err(bad("certificate.lattice_t_stride", "must be at least 1"));
        }
        if c.lattice_n_rho < 2 {
            return Err(bad("certificate.lattice_n_rho", "must be at least 2"));
        }

        positive("report.k_tolerance", self.report.k_tolerance)?;
        positive("report.c_tolerance", self.report.c_tolerance)?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
