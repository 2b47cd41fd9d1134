use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use frontlab::angular_solver::{
    run_2d, snapshot_report, AngularShift, Edge, PolarModel, StepPolicy, SupportShape,
};
use frontlab::certificates::{
    default_lattice, integrate_system_310, integrate_system_41, mollify_shift,
    supersolution_residual, CertificateParams, EpsFn,
};
use frontlab::front_analysis::{fit_log_shift, FitMode, FitOptions, FrontHistory};
use frontlab::nonlinearity::derive_gap_constants;
use frontlab::radial_solver::{
    min_frame_offset, run, Frame, InitialDatum, InitialKind, RadialGrid, RadialModel,
};
use frontlab::wave_profile::solve_profile;
use frontlab::{BistableNonlinearity, GapConstants, WaveProfile};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{fmt15, fmt17, read_columns, write_csv, write_json};

/// One pass/fail comparison recorded in `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn abs(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    fn flag(name: &str, pass: bool) -> Self {
        Self {
            name: name.to_string(),
            value: if pass { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            pass,
        }
    }
}

/// Results and checks of one step of the pipeline.
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
}

/// Nonlinearity, travelling wave and gap constants of a configuration.
pub struct Setup {
    pub f: BistableNonlinearity,
    pub profile: WaveProfile,
    pub gaps: GapConstants,
}

fn num<T>(context: &str, r: frontlab::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::numerical(context, e))
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let n = &cfg.nonlinearity;
    let f = if n.kind == "table" {
        let path = n.table_path.as_ref().expect("validated");
        let cols = read_columns(path, &["u", "f"])?;
        num(
            "nonlinearity",
            BistableNonlinearity::from_table(&cols[0], &cols[1]),
        )?
    } else {
        num("nonlinearity", BistableNonlinearity::make_cubic(n.theta))?
    };
    let profile = num("profile", solve_profile(&f, n.tol))?;
    let gaps = num("gap constants", derive_gap_constants(&f, &profile))?;
    Ok(Setup { f, profile, gaps })
}

fn closed_form_speed(theta: f64) -> f64 {
    (1.0 - 2.0 * theta) / std::f64::consts::SQRT_2
}

fn k_target(cfg: &ExperimentConfig, c_star: f64) -> f64 {
    (cfg.dim as f64 - 1.0) / c_star
}

pub fn profile(cfg: &ExperimentConfig, s: &Setup, csv_path: &Path) -> Result<Outcome, CliError> {
    let p = &s.profile;
    let rows = p
        .xi_grid
        .iter()
        .zip(&p.u_values)
        .zip(&p.du_values)
        .map(|((x, u), d)| vec![fmt15(*x), fmt15(*u), fmt15(*d)]);
    write_csv(csv_path, &["xi", "u", "du"], rows)?;
    let mut checks = vec![Check::flag("profile_monotone", p.is_monotone())];
    if cfg.nonlinearity.kind == "cubic" {
        checks.push(Check::abs(
            "c_star_closed_form",
            p.c_star,
            closed_form_speed(cfg.nonlinearity.theta),
            cfg.report.c_tolerance,
        ));
    }
    Ok(Outcome {
        results: json!({
            "c_star": p.c_star,
            "c_bracket": [p.c_bracket.0, p.c_bracket.1],
            "tail_rates": p.tail_rates,
            "ode_residual_max": p.ode_residual_max(),
            "points": p.xi_grid.len(),
            "gaps": s.gaps,
            "f_lipschitz": s.f.f_lipschitz(),
        }),
        checks,
    })
}

fn cadence(every: f64, t_final: f64) -> Vec<f64> {
    (1..)
        .map(|i| i as f64 * every)
        .take_while(|&t| t < t_final)
        .filter(|&t| t > 1.0)
        .collect()
}

fn on_cadence(t: f64, every: f64) -> bool {
    let k = (t / every).round();
    k >= 1.0 && (t - k * every).abs() <= 1e-9 * every.max(1.0)
}

fn initial_datum(cfg: &ExperimentConfig) -> InitialDatum {
    let i = &cfg.initial;
    let kind = match i.kind.as_str() {
        "ball_indicator" => InitialKind::BallIndicator,
        "smoothed_ball" => InitialKind::SmoothedBall { width: i.width },
        _ => InitialKind::ProfileCap,
    };
    InitialDatum {
        kind,
        r1: i.r1,
        r2: i.r2,
    }
}

/// Window `[lo, lo + width]` centred on `center` when given and possible,
/// with its left edge at physical radius at least `min_radius` for all `t ≥ 1`.
fn moving_window(
    c_star: f64,
    k: f64,
    center: Option<f64>,
    width: f64,
    min_radius: f64,
    dr: f64,
) -> Result<RadialGrid, CliError> {
    let floor = min_radius - min_frame_offset(c_star, k, 1.0);
    let lo = center.map_or(floor, |c| (c - 0.5 * width).max(floor));
    let lo = (lo / dr).ceil() * dr;
    num("grid", RadialGrid::window(lo, width, dr))
}

/// Radial run: writes `snapshots.csv` and `fronts.csv` into `dir`.
pub fn simulate1d(
    cfg: &ExperimentConfig,
    s: &Setup,
    dir: &Path,
) -> Result<(Outcome, FrontHistory), CliError> {
    let c_star = s.profile.c_star;
    let model = num("model", RadialModel::new(s.f.clone(), cfg.dim, c_star))?;
    let t_final = cfg.time.t_final;
    let datum = initial_datum(cfg);
    let (frame, grid) = if cfg.time.frame == "lab" {
        let r_max = datum.r2 + c_star * t_final + 30.0;
        (
            Frame::Lab,
            num("grid", RadialGrid::lab(r_max, cfg.grid.dr))?,
        )
    } else {
        let center = 0.5 * (datum.r1 + datum.r2);
        let g = moving_window(
            c_star,
            model.k_shift,
            Some(center),
            cfg.grid.window_width,
            cfg.grid.min_radius,
            cfg.grid.dr,
        )?;
        (Frame::Moving, g)
    };
    let state = num(
        "initial datum",
        model.build_initial(&datum, frame, grid, Some(&s.profile)),
    )?;
    let dt = cfg
        .time
        .dt
        .min(model.monotone_dt(frame, &grid, 1.0, t_final));
    let times = cadence(cfg.time.snapshot_every, t_final);
    let out = num(
        "simulate1d",
        run(&model, &state, t_final, dt, &times, cfg.fit.level),
    )?;

    let h = &out.history;
    write_csv(
        &dir.join("fronts.csv"),
        &["t", "r_level", "delay"],
        h.times
            .iter()
            .zip(&h.positions)
            .map(|(t, r)| vec![fmt17(*t), fmt17(*r), fmt17(c_star * t - r)]),
    )?;
    let every = cfg.time.field_every;
    let mut rows = Vec::new();
    for st in std::iter::once(&state).chain(&out.snapshots) {
        if st.t == 1.0 || st.t == t_final || on_cadence(st.t, every) {
            let off = st.frame_offset();
            for (i, u) in st.u.iter().enumerate() {
                rows.push(vec![fmt17(st.t), fmt17(st.grid.node(i) + off), fmt17(*u)]);
            }
        }
    }
    write_csv(&dir.join("snapshots.csv"), &["t", "r", "u"], rows)?;

    let last_t = *h.times.last().unwrap();
    let last_r = *h.positions.last().unwrap();
    let results = json!({
        "c_star": c_star,
        "k_shift": model.k_shift,
        "k_target": k_target(cfg, c_star),
        "frame": cfg.time.frame,
        "dt": dt,
        "grid": { "origin": grid.origin, "dr": grid.dr, "n": grid.n },
        "initial": { "kind": cfg.initial.kind, "r1": datum.r1, "r2": datum.r2 },
        "fronts": h.len(),
        "final_t": last_t,
        "final_r_level": last_r,
        "final_delay": c_star * last_t - last_r,
    });
    Ok((
        Outcome {
            results,
            checks: Vec::new(),
        },
        out.history,
    ))
}

/// Delay-law fit of `h`, written to `json_path`.
pub fn fit(
    cfg: &ExperimentConfig,
    c_star: f64,
    h: &FrontHistory,
    json_path: &Path,
) -> Result<Outcome, CliError> {
    let mode: FitMode = num("fit", cfg.fit.mode.parse())?;
    let c = cfg.fit.c_star.unwrap_or(c_star);
    let mut opts = match mode {
        FitMode::Full => FitOptions::full(),
        FitMode::FixedSpeed => FitOptions::fixed_speed(c),
    };
    let t_hi = *h
        .times
        .last()
        .ok_or_else(|| CliError::Config("fronts: no samples".into()))?;
    if cfg.fit.window_lo.is_some() || cfg.fit.window_hi.is_some() {
        let hi = cfg.fit.window_hi.unwrap_or(t_hi);
        let lo = cfg.fit.window_lo.unwrap_or(0.25 * hi);
        opts = opts.with_window(lo, hi);
    }
    let fit = num("fit", fit_log_shift(h, &opts))?;
    write_json(json_path, &fit)?;
    let target = k_target(cfg, c);
    let tol = cfg.report.k_tolerance * target.abs().max(1.0);
    Ok(Outcome {
        results: json!({
            "fit": fit,
            "k_target": target,
            "k_relative_error": if target != 0.0 { (fit.k_fit - target) / target } else { fit.k_fit },
        }),
        checks: vec![Check::abs("k_fit_vs_target", fit.k_fit, target, tol)],
    })
}

pub fn read_fronts(path: &Path, level: f64) -> Result<FrontHistory, CliError> {
    let cols = read_columns(path, &["t", "r_level"])?;
    FrontHistory::from_samples(cols[0].clone(), cols[1].clone(), level)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn support_shape(cfg: &ExperimentConfig) -> SupportShape {
    let s = &cfg.shape;
    if s.kind == "star" {
        SupportShape::Star {
            r_bar: s.a,
            eps: s.eps,
            m: s.m,
        }
    } else {
        SupportShape::Ellipse { a: s.a, b: s.b }
    }
}

/// Polar run: writes `field_t*.csv`, `shift.csv` and `diagnostics.csv`.
pub fn simulate2d(
    cfg: &ExperimentConfig,
    s: &Setup,
    dir: &Path,
) -> Result<(Outcome, AngularShift), CliError> {
    if cfg.dim != 2 {
        return Err(CliError::Config(format!(
            "dim: polar runs need dim = 2, got {}",
            cfg.dim
        )));
    }
    let c_star = s.profile.c_star;
    let radial = num("model", RadialModel::new(s.f.clone(), 2, c_star))?;
    let k = radial.k_shift;
    let model = num("model", PolarModel::new(radial))?;
    let g = &cfg.grid;
    let grid = moving_window(
        c_star,
        k,
        None,
        g.window_width_polar,
        g.min_radius_polar,
        g.dr_polar,
    )?;
    let shape = support_shape(cfg);
    let edge = if cfg.shape.edge == "smoothed" {
        Edge::Smoothed {
            width: cfg.shape.edge_width,
        }
    } else {
        Edge::Sharp
    };
    let field = num(
        "initial datum",
        model.build_initial_2d(&shape, edge, grid, g.n_angles),
    )?;
    let t_final = cfg.time.t_final;
    let mut snaps = cadence(cfg.time.snapshot_every, t_final);
    snaps.extend(cadence(cfg.time.field_every_polar, t_final));
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();

    let mut diag = Vec::new();
    let mut dumps = Vec::new();
    let mut last_shift = None;
    let policy = StepPolicy::Monotone {
        dt_max: cfg.time.dt_polar,
    };
    run_2d(&model, &field, t_final, policy, &snaps, |f| {
        if on_cadence(f.t, cfg.time.snapshot_every) || f.t == t_final {
            let (r, shift) = snapshot_report(f, &s.profile, s.gaps.m_window)?;
            diag.push(r);
            last_shift = Some(shift);
        }
        if on_cadence(f.t, cfg.time.field_every_polar) || f.t == t_final {
            let off = f.frame_offset();
            let mut rows = Vec::with_capacity(f.u.len());
            for (j, th) in f.theta_grid.iter().enumerate() {
                for (i, u) in f.column(j).iter().enumerate() {
                    rows.push(vec![fmt17(f.r_grid.node(i) + off), fmt17(*th), fmt17(*u)]);
                }
            }
            dumps.push((f.t, rows));
        }
        Ok(())
    })
    .map_err(|e| CliError::numerical("simulate2d", e))?;

    for (t, rows) in dumps {
        write_csv(
            &dir.join(format!("field_t{t:010.3}.csv")),
            &["r", "theta", "u"],
            rows,
        )?;
    }
    write_csv(
        &dir.join("diagnostics.csv"),
        &[
            "t",
            "grad_theta_max",
            "sup_err_vs_shifted_wave",
            "min_V_window",
        ],
        diag.iter().map(|r| {
            vec![
                fmt17(r.t),
                fmt17(r.grad_theta_max),
                fmt17(r.sup_err_vs_shifted_wave),
                fmt17(r.min_v_window),
            ]
        }),
    )?;
    let shift = last_shift.expect("final snapshot is always observed");
    write_csv(
        &dir.join("shift.csv"),
        &["theta_rad", "s_value"],
        shift
            .theta_grid
            .iter()
            .zip(&shift.s_values)
            .map(|(th, v)| vec![fmt17(*th), fmt17(*v)]),
    )?;
    let last = diag.last().expect("final snapshot is always observed");
    let results = json!({
        "c_star": c_star,
        "shape": shape,
        "edge": edge,
        "grid": { "origin": grid.origin, "dr": grid.dr, "n": grid.n, "n_angles": g.n_angles },
        "final": last,
        "shift_range": shift.range(),
        "lipschitz_estimate": shift.lipschitz_estimate,
    });
    Ok((
        Outcome {
            results,
            checks: Vec::new(),
        },
        shift,
    ))
}

fn certificate_params(cfg: &ExperimentConfig, s: &Setup) -> CertificateParams {
    let c = &cfg.certificate;
    let growth = c.system == "310";
    let mut p =
        CertificateParams::from_gaps(&s.gaps, s.f.f_lipschitz(), s.profile.c_star, cfg.dim, c.eps);
    if let Some(t) = c.t_start {
        p.t_start = t;
    }
    p.t_final = c
        .t_final
        .unwrap_or(if growth { 10.0 } else { 100.0 } * p.t_start);
    p.eta = c.eta.unwrap_or(if growth { 1e-3 } else { p.eta });
    p
}

/// Certificate run: writes `certificate.csv` into `dir` and the summary to
/// `json_path`. With `shift` the super-solution residual is evaluated too.
pub fn certify(
    cfg: &ExperimentConfig,
    s: &Setup,
    shift: Option<&[f64]>,
    dir: &Path,
    json_path: &Path,
) -> Result<Outcome, CliError> {
    let c = &cfg.certificate;
    let p = certificate_params(cfg, s);
    let mut checks = Vec::new();
    let mut summary = json!({ "system": c.system, "params": p });

    let cert = if c.system == "310" {
        let growth = num(
            "certify",
            integrate_system_310(&p, EpsFn::Constant { eps: c.eps }, c.q0, c.xi0),
        )?;
        let m = (p.delta + p.f_lipschitz) / (p.gamma + p.eta);
        let predicted = 8.0 * c.eps * m / (p.c_star * p.delta);
        summary["envelope_pass"] = Value::Null;
        summary["K"] = Value::Null;
        summary["alpha"] = json!(growth.alpha);
        summary["alpha_quasi_static"] = json!(predicted);
        summary["q0"] = json!(c.q0);
        summary["xi0"] = json!(c.xi0);
        growth.certificate
    } else {
        let cert = num("certify", integrate_system_41(&p))?;
        summary["envelope_pass"] = json!(cert.envelope_pass);
        summary["K"] = json!(cert.envelope_k);
        checks.push(Check::flag("envelope", cert.envelope_pass));
        cert
    };
    summary["sup_xi"] = json!(cert.sup_xi());

    summary["residual_min"] = Value::Null;
    summary["condition_4_12_pass"] = Value::Null;
    summary["condition_4_14_pass"] = Value::Null;
    if let Some(values) = shift {
        if c.system == "310" {
            return Err(CliError::Config(
                "certificate.shift_path: the residual uses the decay system 41".into(),
            ));
        }
        let moll = num("mollifier", mollify_shift(values, c.eps))?;
        let lattice = default_lattice(
            &cert,
            c.lattice_t_stride,
            c.lattice_n_rho,
            moll.s_plus.len(),
        );
        let r = num(
            "residual",
            supersolution_residual(&s.profile, &s.gaps, &moll, &cert, &p, &lattice, 1.0),
        )?;
        summary["residual_min"] = json!(r.residual_min);
        summary["residual_argmin"] = json!(r.argmin);
        summary["condition_4_12_pass"] = json!(r.condition_4_12_pass);
        summary["condition_4_12_margin"] = json!(r.condition_4_12_margin);
        summary["condition_4_14_pass"] = json!(r.condition_4_14_pass);
        summary["condition_4_14_margin"] = json!(r.condition_4_14_margin);
        summary["implication_holds"] = json!(r.implication_holds);
        summary["mollifier"] = json!({
            "offset_const": moll.offset_const,
            "lipschitz": moll.lipschitz,
            "lipschitz_smoothed": moll.lipschitz_smoothed,
            "laplacian_max": moll.laplacian_max,
            "gradient_bound_holds": moll.gradient_bound_holds,
            "laplacian_bound_holds": moll.laplacian_bound_holds,
        });
        summary["lattice"] = json!({
            "t_values": lattice.t_values.len(),
            "rho_values": lattice.rho_values.len(),
            "n_theta": lattice.n_theta,
        });
        checks.push(Check::abs(
            "residual_min_nonnegative",
            r.residual_min.min(0.0),
            0.0,
            1e-8,
        ));
        checks.push(Check::flag("condition_4_12", r.condition_4_12_pass));
        checks.push(Check::flag("condition_4_14", r.condition_4_14_pass));
    }

    write_csv(
        &dir.join("certificate.csv"),
        &["t", "q", "xi"],
        cert.times
            .iter()
            .zip(&cert.q_values)
            .zip(&cert.xi_values)
            .map(|((t, q), x)| vec![fmt17(*t), fmt17(*q), fmt17(*x)]),
    )?;
    write_json(json_path, &summary)?;
    Ok(Outcome {
        results: summary,
        checks,
    })
}

pub fn read_shift(path: &Path) -> Result<Vec<f64>, CliError> {
    let cols = read_columns(path, &["theta_rad", "s_value"])?;
    Ok(cols[1].clone())
}
