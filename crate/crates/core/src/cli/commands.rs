use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use super::config::{CellCommand, ExperimentConfig};
use super::manifest::RunDir;
use crate::asymptotics::{
    check_bounds, fit_correction, fit_sqrt_law, theta_level_bound, trailing_window,
};
use crate::error::{Error, Result};
use crate::hw_profile::{a_consistency_report, default_y, gamma_max, solve_phi};
use crate::pme_solver::{
    support_bounds, Evolution, EvolveOptions, FrontTrace, Grid, PmeProblem, State, TraceSample,
};
use crate::selfsimilar::{shoot_xi as shoot, shoot_xi_free_boundary};
use crate::stationary_profiles::{bump_profile, l_and_big_l, l_of_b_quadrature};
use crate::threshold::{bisect_lambda_with, classify, ProbeRecord};

/// One line of a sweep summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CellSummary {
    pub u_max_end: Option<f64>,
    pub r_end: Option<f64>,
    pub mass_end: Option<f64>,
    pub verdict: Option<String>,
    pub lambda_lo: Option<f64>,
    pub lambda_hi: Option<f64>,
    pub probes: Option<usize>,
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    command: CellCommand,
    dir: &mut RunDir,
) -> Result<CellSummary> {
    match command {
        CellCommand::Solve => solve(cfg, dir),
        CellCommand::FindLambda => find_lambda(cfg, dir),
    }
}

fn always(_: &TraceSample, _: &State, _: &Grid) -> bool {
    true
}

pub fn solve(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<CellSummary> {
    let spec = cfg.spec()?;
    let (u0, grid) = cfg.initial_state()?;
    let opts =
        EvolveOptions::new(cfg.run.horizon, cfg.run.sample_every).with_safety(cfg.run.safety);
    let mut ev = Evolution::new(u0, PmeProblem::with_reaction(spec), grid, &opts)?;
    ev.advance_to(cfg.run.horizon, &mut always)?;
    let stats = ev.stats();
    let (trace, _, state, grid) = ev.into_parts();
    let verdict = classify(&trace, &spec, 0.1 * cfg.run.horizon);
    let last = *trace
        .last()
        .ok_or_else(|| Error::Integration("empty trace".into()))?;
    let support = support_bounds(&state, &grid);

    let mut profile = String::from("x,u\n");
    for (i, u) in state.u.iter().enumerate() {
        let _ = writeln!(profile, "{},{}", grid.x(i), u);
    }
    dir.write("trace.csv", trace.to_csv().as_bytes())?;
    dir.write("final.csv", profile.as_bytes())?;
    dir.write_json(
        "report.json",
        &json!({
            "t_end": state.t,
            "u_max_end": state.max(),
            "u_center_end": last.u_center,
            "mass_end": last.mass,
            "support_end": support.bounds(),
            "theta_pos_end": last.theta_pos,
            "grid": { "x_min": grid.x_min(), "x_max": grid.x_max(), "n": grid.n(), "dx": grid.dx() },
            "stats": stats,
            "theta_anomalies": trace.theta_anomalies,
            "verdict": verdict,
        }),
    )?;
    Ok(CellSummary {
        u_max_end: Some(state.max()),
        r_end: last.r,
        mass_end: Some(last.mass),
        verdict: Some(format!("{:?}", verdict.kind).to_lowercase()),
        ..Default::default()
    })
}

pub fn shoot_xi(m: f64, theta: f64, tol: f64, dir: &mut RunDir) -> Result<()> {
    let xi = shoot(m, theta, tol)?;
    let mut csv = String::from("y,xi,dxi\n");
    for i in 0..xi.ys.len() {
        let _ = writeln!(csv, "{},{},{}", xi.ys[i], xi.xi[i], xi.dxi[i]);
    }
    let fb = shoot_xi_free_boundary(m, theta, tol);
    let free_boundary = match &fb {
        Ok(f) => json!({ "y0": f.y0, "slope0": f.slope0, "flux_at_root": f.flux_at_root }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    dir.write("profile.csv", csv.as_bytes())?;
    dir.write_json(
        "y0.json",
        &json!({
            "m": m,
            "theta": theta,
            "y0": xi.y0,
            "upper_bracket": theta.powf(0.5 * (m - 1.0)),
            "slope0": xi.slope0,
            "flux_at_root": xi.flux_at_root,
            "launch": xi.launch,
            "residual": xi.residual(0.5),
            "free_boundary": free_boundary,
        }),
    )
}

pub fn profile_qb(cfg: &ExperimentConfig, b_list: &[f64], dir: &mut RunDir) -> Result<()> {
    let spec = cfg.spec()?;
    let mut widths = String::from("b,l_b,L_b,slope_at_l\n");
    let mut rows = Vec::new();
    for &b in b_list {
        let w = l_and_big_l(&spec, b)?;
        let q = bump_profile(&spec, b)?;
        let l_quad = l_of_b_quadrature(&spec, b)?;
        let _ = writeln!(widths, "{},{},{},{}", w.b, w.l, w.big_l, w.slope_at_l);
        let mut csv = String::from("x,q\n");
        for (x, v) in q.xs.iter().zip(&q.qs) {
            let _ = writeln!(csv, "{x},{v}");
        }
        let name = format!("bump_{:03}.csv", rows.len());
        dir.write(&name, csv.as_bytes())?;
        rows.push(json!({
            "b": b,
            "file": name,
            "widths": w,
            "l_quadrature": l_quad,
            "first_integral_residual": q.first_integral_residual(&spec)?,
        }));
    }
    dir.write("widths.csv", widths.as_bytes())?;
    dir.write_json(
        "report.json",
        &json!({ "reaction": spec.params(), "bumps": rows }),
    )
}

pub fn hw_profile(
    p: f64,
    m: f64,
    theta: f64,
    gamma: f64,
    y_end: Option<f64>,
    dir: &mut RunDir,
) -> Result<()> {
    let y_end = y_end.unwrap_or_else(|| default_y(p));
    let phi = solve_phi(p, m, theta, gamma, y_end)?;
    let consistency = a_consistency_report(&phi);
    let mut csv = String::from("y,phi,dphi\n");
    for i in 0..phi.ys.len() {
        let _ = writeln!(csv, "{},{},{}", phi.ys[i], phi.phi[i], phi.dphi[i]);
    }
    dir.write("profile.csv", csv.as_bytes())?;
    dir.write_json(
        "report.json",
        &json!({
            "p": p,
            "m": m,
            "theta": theta,
            "gamma": gamma,
            "gamma_max": gamma_max(p)?,
            "Y": y_end,
            "A": phi.a,
            "decay": phi.decay(),
            "plateau_slope": phi.plateau_slope,
            "max_residual": phi.max_residual,
            "min_phi": phi.phi.iter().copied().fold(f64::INFINITY, f64::min),
            "consistency": consistency,
            "consistent": consistency.consistent(),
        }),
    )
}

pub fn find_lambda(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<CellSummary> {
    let setup = cfg.probe_setup()?;
    let mut traces: Vec<String> = Vec::new();
    let bracket = bisect_lambda_with(
        &setup,
        cfg.threshold.tol,
        &mut |_: &ProbeRecord, trace: &FrontTrace| {
            traces.push(trace.to_csv());
        },
    )?;
    let mut log = String::from(
        "probe,lambda,side,verdict,certificate,rigorous,fired_at,tie_break,extended,u_max_end\n",
    );
    for (i, p) in bracket.probes.iter().enumerate() {
        let v = &p.verdict;
        let _ = writeln!(
            log,
            "{i},{},{:?},{:?},{},{},{},{},{},{}",
            p.lambda,
            p.side,
            v.kind,
            v.certificate.replace(',', ";"),
            v.rigorous,
            v.fired_at.map(|t| t.to_string()).unwrap_or_default(),
            p.tie_break,
            p.extended,
            p.u_max_end
        );
    }
    for (i, csv) in traces.iter().enumerate() {
        dir.write(&format!("probes/probe_{i:03}.csv"), csv.as_bytes())?;
    }
    dir.write("probes.csv", log.to_lowercase().as_bytes())?;
    dir.write_json(
        "report.json",
        &json!({
            "lambda_lo": bracket.lambda_lo,
            "lambda_hi": bracket.lambda_hi,
            "lambda_mid": bracket.mid(),
            "relative_width": bracket.relative_width(),
            "monotone": bracket.is_monotone(),
            "iterations": bracket.iterations(),
            "bracket": bracket,
        }),
    )?;
    Ok(CellSummary {
        lambda_lo: Some(bracket.lambda_lo),
        lambda_hi: Some(bracket.lambda_hi),
        probes: Some(bracket.iterations()),
        ..Default::default()
    })
}

fn or_error<T: Serialize>(r: Result<T>) -> serde_json::Value {
    match r {
        Ok(v) => json!(v),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn asymptotics(text: &str, y0: f64, p: f64, dx: Option<f64>, dir: &mut RunDir) -> Result<()> {
    if !(y0 > 0.0) {
        return Err(Error::param("y0", format!("{y0} must be positive")));
    }
    if !(p > 1.0) {
        return Err(Error::param("p", format!("{p} must exceed 1")));
    }
    let mut trace = FrontTrace::from_csv(text)?;
    if let Some(dx) = dx {
        if !(dx > 0.0) {
            return Err(Error::param("dx", format!("{dx} must be positive")));
        }
        // only the spacing matters to the fits
        trace.grid = Some(Grid::new(-8.0 * dx, 8.0 * dx, 16)?);
    }
    let (win, window) = trailing_window(&trace)?;
    let bounds = check_bounds(&trace, y0, p)?;
    let mut csv = String::from("t,r,lead,corr,lower_bound,upper_bound\n");
    for s in &win {
        let Some(r) = s.r else { continue };
        let lead = 2.0 * y0 * s.t.sqrt();
        let lower = match bounds.lower_exponent {
            Some(q) => lead + bounds.h * s.t.powf(q),
            None => lead - bounds.h,
        };
        let upper = lead + bounds.big_h * s.t.powf(bounds.upper_exponent);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.t,
            r,
            lead,
            r - lead,
            lower,
            upper
        );
    }
    dir.write("fit.csv", csv.as_bytes())?;
    dir.write_json(
        "report.json",
        &json!({
            "y0": y0,
            "p": p,
            "window": window,
            "sqrt_law": or_error(fit_sqrt_law(&trace)),
            "correction": or_error(fit_correction(&trace, y0)),
            "bounds": bounds,
            "theta_level": or_error(theta_level_bound(&trace, p)),
        }),
    )
}
