//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use frontlab::angular_solver::{
    default_planar_window, extract_angular_shift, run_2d, snapshot_report, Edge, PolarField,
    PolarModel, PolarSnapshotReport, StepPolicy, SupportShape, DEFAULT_ANGLES,
};
use frontlab::certificates::{
    default_lattice, integrate_system_310, integrate_system_41, mollify_shift,
    supersolution_residual, CertificateParams, EpsFn,
};
use frontlab::front_analysis::{
    fit_log_shift, moving_frame_drift, verify_radial_sandwich, FitOptions,
};
use frontlab::nonlinearity::derive_gap_constants;
use frontlab::radial_solver::{
    default_moving_window, run, Frame, InitialDatum, InitialKind, RadialGrid, RadialModel,
    RunOutput, Workspace,
};
use frontlab::wave_profile::solve_profile;
use frontlab::{BistableNonlinearity, GapConstants, WaveProfile};

const THETA: f64 = 0.25;
const DR: f64 = 0.05;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &'static str, result: Result<(bool, String), String>) -> Outcome {
    let (pass, detail) = match result {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let o = Outcome {
        id,
        name,
        pass,
        detail,
    };
    println!(
        "criterion {:>2} [{}] {}: {}",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.detail
    );
    o
}

struct Setup {
    f: BistableNonlinearity,
    profile: WaveProfile,
    gaps: GapConstants,
}

fn setup() -> Setup {
    let f = BistableNonlinearity::make_cubic(THETA).unwrap();
    let profile = solve_profile(&f, 1e-10).unwrap();
    let gaps = derive_gap_constants(&f, &profile).unwrap();
    Setup { f, profile, gaps }
}

fn closed_form_speed(theta: f64) -> f64 {
    (1.0 - 2.0 * theta) / 2.0f64.sqrt()
}

fn closed_form_profile(xi: f64) -> f64 {
    1.0 / (1.0 + (xi / 2.0f64.sqrt()).exp())
}

fn wave_speed() -> Result<(bool, String), String> {
    let mut pass = true;
    let mut parts = Vec::new();
    for theta in [0.1, 0.2, 0.25, 0.3, 0.4] {
        let f = BistableNonlinearity::make_cubic(theta).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let p = solve_profile(&f, 1e-8).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let err = (p.c_star - closed_form_speed(theta)).abs();
        pass &= err < 1e-4 && elapsed < Duration::from_secs(1);
        parts.push(format!(
            "θ={theta}: |Δc|={err:.1e} in {:.0} ms",
            elapsed.as_secs_f64() * 1e3
        ));
    }
    Ok((pass, parts.join(", ")))
}

fn profile_shape(s: &Setup) -> Result<(bool, String), String> {
    let err = (0..=3000)
        .map(|i| -15.0 + 0.01 * i as f64)
        .map(|xi| (s.profile.eval(xi).0 - closed_form_profile(xi)).abs())
        .fold(0.0, f64::max);
    Ok((
        err < 1e-5,
        format!("sup |U* - closed form| on [-15,15] = {err:.2e}"),
    ))
}

fn moving_run(
    s: &Setup,
    n_dim: usize,
    k_factor: f64,
    center: f64,
    dt: f64,
) -> Result<(RadialModel, RunOutput), String> {
    let base = RadialModel::new(s.f.clone(), n_dim, s.profile.c_star).map_err(|e| e.to_string())?;
    let k = base.k_shift * k_factor;
    let model = base.with_frame_k(k);
    let grid = default_moving_window(&model, center, 1.0, DR).map_err(|e| e.to_string())?;
    let datum = InitialDatum {
        kind: InitialKind::ProfileCap,
        r1: center - 2.0,
        r2: center + 2.0,
    };
    let state = model
        .build_initial(&datum, Frame::Moving, grid, Some(&s.profile))
        .map_err(|e| e.to_string())?;
    let dt = dt.min(model.monotone_dt(Frame::Moving, &grid, 1.0, 800.0));
    let snaps: Vec<f64> = (1..=160).map(|i| 5.0 * i as f64).collect();
    let out = run(&model, &state, 800.0, dt, &snaps, 0.5).map_err(|e| e.to_string())?;
    Ok((model, out))
}

fn log_delay(s: &Setup, runs: &[(usize, &RunOutput)]) -> Result<(bool, String), String> {
    let mut pass = true;
    let mut parts = Vec::new();
    for &(n_dim, out) in runs {
        let opts = FitOptions::fixed_speed(s.profile.c_star).with_window(200.0, 800.0);
        let fit = fit_log_shift(&out.history, &opts).map_err(|e| e.to_string())?;
        let target = (n_dim as f64 - 1.0) / s.profile.c_star;
        let rel = (fit.k_fit - target).abs() / target;
        let control = fit.control_rms / fit.residual_rms;
        pass &= rel < 0.1 && control >= 5.0;
        parts.push(format!(
            "N={n_dim}: k_fit={:.4} (target {target:.4}, {:.1}%), rms {:.1e}, constant-only rms ratio {control:.0}",
            fit.k_fit,
            100.0 * rel,
            fit.residual_rms
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn stationarity(
    s: &Setup,
    right: &RunOutput,
    wrong: &RunOutput,
    k_true: f64,
) -> Result<(bool, String), String> {
    let c = s.profile.c_star;
    let d = moving_frame_drift(&right.history, c, k_true, Some((100.0, 800.0)))
        .map_err(|e| e.to_string())?;
    let d0 = moving_frame_drift(&wrong.history, c, 0.0, Some((100.0, 800.0)))
        .map_err(|e| e.to_string())?;
    let predicted = -k_true * 8.0f64.ln();
    let rel = (d0.drift - predicted).abs() / predicted.abs();
    let pass = d.drift.abs() <= 5.0 * DR && rel <= 0.25;
    Ok((
        pass,
        format!(
            "drift with k=(N-1)/c* is {:.3} (limit {:.2}); with k=0 it is {:.3} vs predicted {predicted:.3} ({:.0}% off)",
            d.drift,
            5.0 * DR,
            d0.drift,
            100.0 * rel
        ),
    ))
}

type Verdict = Result<(bool, String), String>;

struct PlanarRun {
    reports: Vec<PolarSnapshotReport>,
    final_field: PolarField,
    max_sym_dev: f64,
}

fn planar_ellipse(s: &Setup) -> Result<PlanarRun, String> {
    let radial = RadialModel::new(s.f.clone(), 2, s.profile.c_star).map_err(|e| e.to_string())?;
    let model = PolarModel::new(radial).map_err(|e| e.to_string())?;
    let grid = default_planar_window(&model, DR).map_err(|e| e.to_string())?;
    let field = model
        .build_initial_2d(
            &SupportShape::Ellipse { a: 30.0, b: 20.0 },
            Edge::Sharp,
            grid,
            DEFAULT_ANGLES,
        )
        .map_err(|e| e.to_string())?;
    let snaps: Vec<f64> = (1..=40).map(|i| 10.0 * i as f64).collect();
    let mut reports = Vec::new();
    let last = run_2d(
        &model,
        &field,
        400.0,
        StepPolicy::Monotone { dt_max: 0.05 },
        &snaps,
        |fld| {
            reports.push(snapshot_report(fld, &s.profile, s.gaps.m_window)?.0);
            Ok(())
        },
    )
    .map_err(|e| e.to_string())?;
    let shift = extract_angular_shift(&last, 0.5, &s.profile, None).map_err(|e| e.to_string())?;
    let n = shift.s_values.len();
    let mut max_sym_dev = 0.0f64;
    for j in 0..n {
        let sj = shift.s_values[j];
        max_sym_dev = max_sym_dev
            .max((sj - shift.s_values[(n - j) % n]).abs())
            .max((sj - shift.s_values[(n + n / 2 - j) % n]).abs());
    }
    Ok(PlanarRun {
        reports,
        final_field: last,
        max_sym_dev,
    })
}

fn angle_shift(run: &PlanarRun) -> Result<(bool, String), String> {
    let last = run.reports.last().ok_or("no snapshots")?;
    let tail = &run.reports[run.reports.len() - 5..];
    let non_increasing = tail
        .windows(2)
        .all(|w| w[1].sup_err_vs_shifted_wave <= w[0].sup_err_vs_shifted_wave);
    let pass = last.sup_err_vs_shifted_wave < 0.05
        && non_increasing
        && last.shift_range > 10.0 * DR
        && run.max_sym_dev <= 2.0 * DR;
    Ok((
        pass,
        format!(
            "sup|u - U*(r+s)| = {:.2e} (non-increasing over last 5: {non_increasing}), range of s = {:.3}, reflection asymmetry {:.1e}",
            last.sup_err_vs_shifted_wave, last.shift_range, run.max_sym_dev
        ),
    ))
}

fn max_grad_on(reports: &[PolarSnapshotReport], lo: f64, hi: f64) -> f64 {
    reports
        .iter()
        .filter(|r| r.t >= lo && r.t <= hi)
        .map(|r| r.grad_theta_max)
        .fold(0.0, f64::max)
}

fn angular_bound(s: &Setup, run: &PlanarRun) -> Result<(bool, String), String> {
    let g100 = max_grad_on(&run.reports, 100.0, 200.0);
    let g200 = max_grad_on(&run.reports, 200.0, 400.0);
    let change = (g200 - g100).abs() / g100;

    let radial = RadialModel::new(s.f.clone(), 2, s.profile.c_star).map_err(|e| e.to_string())?;
    let model = PolarModel::new(radial).map_err(|e| e.to_string())?;
    let grid = default_planar_window(&model, DR).map_err(|e| e.to_string())?;
    let circle = model
        .build_initial_2d(
            &SupportShape::Ellipse { a: 25.0, b: 25.0 },
            Edge::Sharp,
            grid,
            64,
        )
        .map_err(|e| e.to_string())?;
    let snaps: Vec<f64> = (1..=20).map(|i| 10.0 * i as f64).collect();
    let mut sym_max = 0.0f64;
    run_2d(
        &model,
        &circle,
        200.0,
        StepPolicy::Monotone { dt_max: 0.05 },
        &snaps,
        |fld| {
            sym_max = sym_max.max(frontlab::angular_solver::angular_gradient_max(fld));
            Ok(())
        },
    )
    .map_err(|e| e.to_string())?;
    let pass = change < 0.1 && sym_max < 1e-8;
    Ok((
        pass,
        format!(
            "max|u_Θ| on [100,200] = {g100:.4}, on [200,400] = {g200:.4} ({:.1}% change); radial datum max|u_Θ| = {sym_max:.1e}",
            100.0 * change
        ),
    ))
}

fn slope_floor(s: &Setup, run: &PlanarRun) -> Result<(bool, String), String> {
    let min_v = run
        .reports
        .iter()
        .filter(|r| r.t >= 50.0)
        .map(|r| r.min_v_window)
        .fold(f64::INFINITY, f64::min);
    let floor = 0.5 * s.gaps.delta_m;
    Ok((
        min_v >= floor,
        format!(
            "min V over |ρ| ≤ M={:.3}, t ≥ 50: {min_v:.5} (floor δ_M/2 = {floor:.5})",
            s.gaps.m_window
        ),
    ))
}

fn decay_certificate() -> Result<(bool, String), String> {
    let p = CertificateParams::reference();
    let cert = integrate_system_41(&p).map_err(|e| e.to_string())?;
    let mut doubled = p;
    doubled.t_final *= 2.0;
    let cert2 = integrate_system_41(&doubled).map_err(|e| e.to_string())?;
    let change = (cert2.sup_xi() - cert.sup_xi()).abs() / cert.sup_xi();
    let t_end = *cert.times.last().unwrap();
    let q_end = *cert.q_values.last().unwrap();
    let floor = 1e-10 + cert.envelope_k * t_end.powf(-1.5);
    let pass = cert.envelope_pass && cert.envelope_k.is_finite() && change < 0.01 && q_end <= floor;
    Ok((
        pass,
        format!(
            "envelope pass={} K={:.2}, sup ξ change on doubling {:.3}%, q(t_final)={q_end:.2e} ≤ {floor:.2e}",
            cert.envelope_pass,
            cert.envelope_k,
            100.0 * change
        ),
    ))
}

fn growth_exponent(s: &Setup) -> Result<(bool, String), String> {
    let mut p = CertificateParams::from_gaps(&s.gaps, s.f.f_lipschitz(), s.profile.c_star, 2, 0.1);
    p.t_start = 1e6;
    p.t_final = 1e7;
    p.eta = 1e-3;
    let eps = [0.01, 0.02, 0.05];
    let mut alphas = Vec::new();
    for &e in &eps {
        let r = integrate_system_310(&p, EpsFn::Constant { eps: e }, 1.0, 1.0)
            .map_err(|e| e.to_string())?;
        alphas.push(r.alpha);
    }
    let n = eps.len() as f64;
    let mx = eps.iter().sum::<f64>() / n;
    let my = alphas.iter().sum::<f64>() / n;
    let sxx: f64 = eps.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = eps
        .iter()
        .zip(&alphas)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let syy: f64 = alphas.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    let slope = sxy / sxx;
    Ok((
        r2 > 0.95 && alphas.iter().all(|a| *a > 0.0),
        format!(
            "α = {:.2?} for ε = {eps:?}; linear fit slope {slope:.1}, R² = {r2:.6}",
            alphas
        ),
    ))
}

fn supersolution(s: &Setup, run: &PlanarRun) -> Result<(bool, String), String> {
    let shift = extract_angular_shift(&run.final_field, 0.5, &s.profile, None)
        .map_err(|e| e.to_string())?;
    let eps = 0.1;
    let moll = mollify_shift(&shift.s_values, eps).map_err(|e| e.to_string())?;
    let p = CertificateParams::from_gaps(&s.gaps, s.f.f_lipschitz(), s.profile.c_star, 2, eps);
    let cert = integrate_system_41(&p).map_err(|e| e.to_string())?;
    let lattice = default_lattice(&cert, 5, 161, moll.s_plus.len());
    let r = supersolution_residual(&s.profile, &s.gaps, &moll, &cert, &p, &lattice, 1.0)
        .map_err(|e| e.to_string())?;
    let flipped = supersolution_residual(&s.profile, &s.gaps, &moll, &cert, &p, &lattice, -1.0)
        .map_err(|e| e.to_string())?;
    let pass =
        r.pass() && r.condition_4_12_pass && r.condition_4_14_pass && flipped.residual_min < 0.0;
    Ok((
        pass,
        format!(
            "residual_min={:.2e} over {}×{}×{} lattice, far-field margin {:.1e}, near-front margin {:.1e}, flipped q gives {:.2e}",
            r.residual_min,
            lattice.t_values.len(),
            lattice.rho_values.len(),
            lattice.n_theta,
            r.condition_4_12_margin,
            r.condition_4_14_margin,
            flipped.residual_min
        ),
    ))
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let lo: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let hi = lo
        .iter()
        .map(|&u| u + (1.0 - u) * rng.random::<f64>())
        .collect();
    (lo, hi)
}

fn comparison(s: &Setup) -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let steps = 10_000;
    let mut worst_1d = f64::INFINITY;
    for pair in 0..20 {
        let model =
            RadialModel::new(s.f.clone(), 2, s.profile.c_star).map_err(|e| e.to_string())?;
        let (frame, grid) = if pair % 2 == 0 {
            (
                Frame::Lab,
                RadialGrid::lab(40.0, 0.1).map_err(|e| e.to_string())?,
            )
        } else {
            (
                Frame::Moving,
                default_moving_window(&model, 20.0, 1.0, 0.1).map_err(|e| e.to_string())?,
            )
        };
        let dt = model.monotone_dt(frame, &grid, 1.0, 1.0 + 1e4);
        let (a, b) = random_pair(&mut rng, grid.n);
        let mut lo = model
            .state_from_values(frame, 1.0, grid, a)
            .map_err(|e| e.to_string())?;
        let mut hi = model
            .state_from_values(frame, 1.0, grid, b)
            .map_err(|e| e.to_string())?;
        let mut ws = Workspace::new(grid.n);
        for _ in 0..steps {
            model
                .step_in_place(&mut lo, dt, &mut ws)
                .map_err(|e| e.to_string())?;
            model
                .step_in_place(&mut hi, dt, &mut ws)
                .map_err(|e| e.to_string())?;
            let gap =
                hi.u.iter()
                    .zip(&lo.u)
                    .map(|(h, l)| h - l)
                    .fold(f64::INFINITY, f64::min);
            worst_1d = worst_1d.min(gap);
        }
    }
    let mut worst_2d = f64::INFINITY;
    let radial = RadialModel::new(s.f.clone(), 2, s.profile.c_star).map_err(|e| e.to_string())?;
    let model = PolarModel::new(radial).map_err(|e| e.to_string())?;
    let base = default_planar_window(&model, 0.1).map_err(|e| e.to_string())?;
    let grid = RadialGrid::window(base.origin, 30.0, 0.1).map_err(|e| e.to_string())?;
    let n_angles = 16;
    let template = model
        .build_initial_2d(
            &SupportShape::Ellipse { a: 25.0, b: 20.0 },
            Edge::Sharp,
            grid,
            n_angles,
        )
        .map_err(|e| e.to_string())?;
    let dt = model.monotone_dt(&grid, n_angles, 1.0, 1.0 + 1e4);
    for _ in 0..20 {
        let (a, b) = random_pair(&mut rng, grid.n * n_angles);
        let mut lo = template.clone();
        lo.u = a;
        let mut hi = template.clone();
        hi.u = b;
        let mut ws = frontlab::angular_solver::StepScratch::new(grid.n);
        for _ in 0..steps {
            model
                .step_in_place(&mut lo, dt, &mut ws)
                .map_err(|e| e.to_string())?;
            model
                .step_in_place(&mut hi, dt, &mut ws)
                .map_err(|e| e.to_string())?;
            let gap =
                hi.u.iter()
                    .zip(&lo.u)
                    .map(|(h, l)| h - l)
                    .fold(f64::INFINITY, f64::min);
            worst_2d = worst_2d.min(gap);
        }
    }
    Ok((
        worst_1d >= -1e-8 && worst_2d >= -1e-8,
        format!(
            "20 pairs × {steps} steps each: min(v - u) = {worst_1d:.1e} (1D), {worst_2d:.1e} (2D)"
        ),
    ))
}

fn sandwich(s: &Setup, out: &RunOutput) -> Result<(bool, String), String> {
    let rep =
        verify_radial_sandwich(&out.snapshots, &s.profile, 10.0).map_err(|e| e.to_string())?;
    let excess_ok = rep.max_upper_excess_ratio <= rep.c_fit * (1.0 + 1e-9)
        && rep.max_lower_excess_ratio <= rep.c_fit * (1.0 + 1e-9);
    let pass = rep.stabilized && rep.gap() < 1.0 && excess_ok;
    Ok((
        pass,
        format!(
            "t0={}, C={:.3}, sup s₊={:.3}, inf s₋={:.3} (gap {:.3}), late variation {:.1e}/{:.1e}, excess·t/ln t ≤ {:.3}/{:.3}",
            rep.t0,
            rep.c_fit,
            rep.sup_s_plus,
            rep.inf_s_minus,
            rep.gap(),
            rep.variation_plus,
            rep.variation_minus,
            rep.max_upper_excess_ratio,
            rep.max_lower_excess_ratio
        ),
    ))
}

fn main() {
    let start = Instant::now();
    let s = setup();
    let mut outcomes = Vec::new();
    outcomes.push(report(1, "wave speed oracle", wave_speed()));
    outcomes.push(report(2, "profile shape oracle", profile_shape(&s)));

    let n2 = moving_run(&s, 2, 1.0, 8.0, 0.01);
    let n3 = moving_run(&s, 3, 1.0, 14.0, 0.01);
    let k0 = moving_run(&s, 2, 0.0, 20.0, 0.01);
    outcomes.push(report(
        3,
        "logarithmic delay",
        match (&n2, &n3) {
            (Ok((_, a)), Ok((_, b))) => log_delay(&s, &[(2, a), (3, b)]),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        },
    ));
    outcomes.push(report(
        4,
        "moving-frame stationarity",
        match (&n2, &k0) {
            (Ok((m, a)), Ok((_, b))) => stationarity(&s, a, b, m.k_shift),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        },
    ));

    let planar = planar_ellipse(&s);
    let with_planar = |f: &dyn Fn(&PlanarRun) -> Verdict| match &planar {
        Ok(p) => f(p),
        Err(e) => Err(e.clone()),
    };
    outcomes.push(report(
        5,
        "angle-dependent shift",
        with_planar(&angle_shift),
    ));
    outcomes.push(report(
        6,
        "angular derivative bound",
        with_planar(&|p| angular_bound(&s, p)),
    ));
    outcomes.push(report(
        7,
        "slope floor near the front",
        with_planar(&|p| slope_floor(&s, p)),
    ));
    outcomes.push(report(8, "decay envelope certificate", decay_certificate()));
    outcomes.push(report(9, "linearized growth exponent", growth_exponent(&s)));
    outcomes.push(report(
        10,
        "supersolution lattice certificate",
        with_planar(&|p| supersolution(&s, p)),
    ));
    outcomes.push(report(11, "comparison principle", comparison(&s)));
    outcomes.push(report(
        12,
        "radial sandwich",
        match &n2 {
            Ok((_, out)) => sandwich(&s, out),
            Err(e) => Err(e.clone()),
        },
    ));

    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        outcomes.len() - failed.len(),
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
