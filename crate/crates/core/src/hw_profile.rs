//! Self-similar profile of the semilinear surrogate
//! `w_t = mθ^{m−1} w_xx + |w|^{p−1} w` for `p > 3`, its far-field constant,
//! and the comparison functions built from it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::interp::{quintic_hermite, MonotoneCubic};
use crate::numerics::ode::{Dopri5, Flow, Point};
use crate::numerics::regression::fit_line;
use crate::pme_solver::FrontTrace;
use crate::reaction::ReactionSpec;

/// Default integration endpoint. The drift term makes the ODE stiff like
/// `y/(2D)`, so the explicit step count grows like `Y²`.
pub const DEFAULT_Y: f64 = 1e3;
/// Gate on the log-log slope of `y^{2/(p−1)} φ` over the last decade.
pub const PLATEAU_GATE: f64 = 1e-3;
/// Tolerance for the three far-field limits to agree.
pub const CONSISTENCY_TOL: f64 = 0.02;

/// Upper end of the admissible `γ` window, `((p−3)/(2p−2))^{1/(p−1)}`.
pub fn gamma_max(p: f64) -> Result<f64> {
    if !(p > 3.0) || !p.is_finite() {
        return Err(Error::param("p", format!("need p > 3, got {p}")));
    }
    Ok(((p - 3.0) / (2.0 * p - 2.0)).powf(1.0 / (p - 1.0)))
}

/// Suggested endpoint: the decay exponent `2/(p−1)` shrinks towards 1 as
/// `p → 3⁺`, which slows the approach to the plateau.
pub fn default_y(p: f64) -> f64 {
    DEFAULT_Y * (3.0 / (p - 3.0)).clamp(1.0, 4.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiProfile {
    pub p: f64,
    pub m: f64,
    pub theta: f64,
    pub gamma: f64,
    pub ys: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// Far-field constant from the last-decade average of `y^{2/(p−1)} φ`.
    pub a: f64,
    pub y_end: f64,
    /// Log-log slope of `y^{2/(p−1)} φ` over the last decade.
    pub plateau_slope: f64,
    /// Largest ODE residual of the step interpolant on `[0, Y/2]`, relative to `γ`.
    pub max_residual: f64,
    #[serde(skip)]
    interp: MonotoneCubic,
}

impl PhiProfile {
    pub fn decay(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    fn diffusivity(&self) -> f64 {
        self.m * self.theta.powf(self.m - 1.0)
    }

    /// `φ(y)`, even in `y`; beyond the table the tail `A·|y|^{−2/(p−1)}` is used.
    pub fn eval(&self, y: f64) -> f64 {
        let y = y.abs();
        if y <= self.y_end {
            self.interp.eval(y)
        } else {
            self.a * y.powf(-self.decay())
        }
    }

    /// `φ''` from the ODE at a stored sample.
    fn second_derivative(&self, i: usize) -> f64 {
        rhs(
            self.p,
            self.diffusivity(),
            self.ys[i],
            self.phi[i],
            self.dphi[i],
        )
    }
}

#[inline]
fn rhs(p: f64, d: f64, y: f64, phi: f64, dphi: f64) -> f64 {
    -(phi / (p - 1.0) + 0.5 * y * dphi + phi.abs().powf(p - 1.0) * phi) / d
}

struct Raw {
    ys: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    max_residual: f64,
}

fn integrate_phi(
    p: f64,
    d: f64,
    gamma: f64,
    y_end: f64,
    rtol: f64,
) -> std::result::Result<Raw, Error> {
    let solver = Dopri5::new(rtol, 1e-6 * rtol * gamma).with_initial_step(1e-4);
    let mut ys = vec![0.0];
    let mut phi = vec![gamma];
    let mut dphi = vec![0.0];
    let mut max_residual = 0.0f64;
    let mut negative_at = None;
    let f = |y: f64, s: &[f64; 2]| [s[1], rhs(p, d, y, s[0], s[1])];
    let res = solver.integrate(f, 0.0, [gamma, 0.0], y_end, |a: &Point<2>, b: &Point<2>| {
        if b.y[0] <= 0.0 {
            negative_at = Some(b.t);
            return Flow::Stop;
        }
        if a.t < 0.5 * y_end {
            let mid = 0.5 * (a.t + b.t);
            let [v, dv, ddv] = quintic_hermite(
                a.t,
                b.t,
                [a.y[0], a.y[1], a.dy[1]],
                [b.y[0], b.y[1], b.dy[1]],
                mid,
            );
            let r = d * ddv + v / (p - 1.0) + 0.5 * mid * dv + v.abs().powf(p - 1.0) * v;
            max_residual = max_residual.max(r.abs() / gamma);
        }
        let last = *ys.last().unwrap();
        if b.t - last >= 1e-2 * last.max(1.0) || b.t == y_end {
            ys.push(b.t);
            phi.push(b.y[0]);
            dphi.push(b.y[1]);
        }
        Flow::Continue
    })?;
    if let Some(y) = negative_at {
        return Err(Error::ProfileNegative { y });
    }
    if *ys.last().unwrap() != res.t {
        ys.push(res.t);
        phi.push(res.y[0]);
        dphi.push(res.y[1]);
    }
    Ok(Raw {
        ys,
        phi,
        dphi,
        max_residual,
    })
}

/// Trapezoidal mean of `g(y)` in `ln y` over `[lo, hi]`, on stored samples.
fn log_mean(ys: &[f64], g: impl Fn(usize) -> f64, lo: f64) -> f64 {
    let start = ys.partition_point(|&y| y < lo);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in start.max(1)..ys.len() {
        if ys[i - 1] < lo {
            continue;
        }
        let w = (ys[i] / ys[i - 1]).ln();
        num += 0.5 * w * (g(i - 1) + g(i));
        den += w;
    }
    num / den
}

/// Integrates the profile ODE from `φ(0) = γ, φ'(0) = 0` to `Y` and extracts
/// the far-field constant. A sign change is first retried at a tighter
/// tolerance before being reported.
pub fn solve_phi(p: f64, m: f64, theta: f64, gamma: f64, y_end: f64) -> Result<PhiProfile> {
    let g_max = gamma_max(p)?;
    if !(m > 1.0) {
        return Err(Error::param("m", format!("need m > 1, got {m}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param(
            "theta",
            format!("need 0 < theta < 1, got {theta}"),
        ));
    }
    if !(gamma > 0.0 && gamma < g_max) {
        return Err(Error::param(
            "gamma",
            format!("need 0 < gamma < {g_max}, got {gamma}"),
        ));
    }
    if !(y_end.is_finite() && y_end >= 10.0) {
        return Err(Error::param(
            "Y",
            format!("need a finite Y >= 10, got {y_end}"),
        ));
    }
    let d = m * theta.powf(m - 1.0);
    let raw = match integrate_phi(p, d, gamma, y_end, 1e-11) {
        Err(Error::ProfileNegative { .. }) => integrate_phi(p, d, gamma, y_end, 1e-13)?,
        other => other?,
    };
    let k = 2.0 / (p - 1.0);
    let lo = y_end / 10.0;
    let scaled = |i: usize| raw.ys[i].powf(k) * raw.phi[i];
    let a = log_mean(&raw.ys, scaled, lo);

    let start = raw.ys.partition_point(|&y| y < lo);
    let (lx, ly): (Vec<f64>, Vec<f64>) = (start..raw.ys.len())
        .map(|i| (raw.ys[i].ln(), scaled(i).ln()))
        .unzip();
    let slope = fit_line(&lx, &ly).map(|f| f.slope).unwrap_or(f64::INFINITY);
    if !(a > 0.0) || !(slope.abs() < PLATEAU_GATE) {
        return Err(Error::PlateauNotReached { slope });
    }
    let interp = MonotoneCubic::new(raw.ys.clone(), raw.phi.clone(), Some(raw.dphi.clone()));
    Ok(PhiProfile {
        p,
        m,
        theta,
        gamma,
        ys: raw.ys,
        phi: raw.phi,
        dphi: raw.dphi,
        a,
        y_end,
        plateau_slope: slope,
        max_residual: raw.max_residual,
        interp,
    })
}

/// The three far-field estimates of `A` and their relative deviations.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AConsistency {
    pub a: f64,
    /// From `φ'·y^{k+1} → −kA`, `k = 2/(p−1)`.
    pub a_from_slope: f64,
    /// From `φ''·y^{k+2} → (p+1)/(p−1)·kA`.
    pub a_from_curvature: f64,
    pub rel_dev_slope: f64,
    pub rel_dev_curvature: f64,
}

impl AConsistency {
    pub fn consistent(&self) -> bool {
        self.rel_dev_slope <= CONSISTENCY_TOL && self.rel_dev_curvature <= CONSISTENCY_TOL
    }
}

/// Last-decade averages of the rescaled first and second derivatives.
pub fn a_consistency_report(profile: &PhiProfile) -> AConsistency {
    let p = profile.p;
    let k = profile.decay();
    let lo = profile.y_end / 10.0;
    let ys = &profile.ys;
    let a_slope = log_mean(ys, |i| -profile.dphi[i] * ys[i].powf(k + 1.0) / k, lo);
    let curv_factor = (p + 1.0) / (p - 1.0) * k;
    let a_curv = log_mean(
        ys,
        |i| profile.second_derivative(i) * ys[i].powf(k + 2.0) / curv_factor,
        lo,
    );
    let a = profile.a;
    AConsistency {
        a,
        a_from_slope: a_slope,
        a_from_curvature: a_curv,
        rel_dev_slope: ((a_slope - a) / a).abs(),
        rel_dev_curvature: ((a_curv - a) / a).abs(),
    }
}

/// Checks the derivative limits against `A`; disagreement beyond 2% points
/// at an under-resolved integration.
#[allow(non_snake_case)]
pub fn estimate_A_consistency(profile: &PhiProfile) -> Result<AConsistency> {
    let report = a_consistency_report(profile);
    if report.consistent() {
        Ok(report)
    } else {
        Err(Error::Integration(format!(
            "far-field limits disagree: A = {}, slope limit {}, curvature limit {}",
            report.a, report.a_from_slope, report.a_from_curvature
        )))
    }
}

/// `n(x,t) = t^{−1/(p−1)} φ(|x|/√t)`.
pub fn eval_n(profile: &PhiProfile, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("t", format!("need t > 0, got {t}")));
    }
    Ok(t.powf(-1.0 / (profile.p - 1.0)) * profile.eval(x / t.sqrt()))
}

/// `θ + n(x,t)/2`, valid while `n < σ`.
pub fn supersolution_w(profile: &PhiProfile, spec: &ReactionSpec, x: f64, t: f64) -> Result<f64> {
    let n = eval_n(profile, x, t)?;
    if n >= spec.sigma {
        return Err(Error::OutsideValidity(format!(
            "n = {n} >= sigma = {} at (x, t) = ({x}, {t})",
            spec.sigma
        )));
    }
    Ok(spec.theta + 0.5 * n)
}

/// `θ + k/(at + x²)^{1/(p−1)}`; requires `at + x² > 0`.
pub fn subsolution_w(k: f64, a: f64, p: f64, theta: f64, x: f64, t: f64) -> Result<f64> {
    if !(k > 0.0 && a > 0.0 && t >= 0.0) {
        return Err(Error::param(
            "k",
            format!("need k > 0, a > 0, t >= 0; got k = {k}, a = {a}, t = {t}"),
        ));
    }
    let base = a * t + x * x;
    if !(base > 0.0) {
        return Err(Error::OutsideValidity(
            "a t + x^2 = 0 (singular point)".into(),
        ));
    }
    Ok(theta + k * base.powf(-1.0 / (p - 1.0)))
}

/// Margin `a − 2m·w^{m−1}` of the sufficient condition for [`subsolution_w`]
/// to be a subsolution; positive means the condition holds at `(x, t)`.
pub fn subsolution_margin(
    k: f64,
    a: f64,
    p: f64,
    theta: f64,
    m: f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    let w = subsolution_w(k, a, p, theta, x, t)?;
    Ok(a - 2.0 * m * w.powf(m - 1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct CenterlineBound {
    /// Largest `C` with `u(0,t) ≥ θ + C(t+T)^{−1/(p−1)}` at every sample `t ≥ T`.
    pub c: f64,
    pub t_shift: f64,
    pub samples: usize,
    /// Log-log slope of `u(0,t) − θ` against `t + T` (expected `−1/(p−1)`).
    pub decay_slope: Option<f64>,
    pub r_squared: Option<f64>,
}

impl CenterlineBound {
    pub fn holds(&self, c: f64) -> bool {
        c <= self.c
    }
}

pub fn centerline_lower_bound(
    trace: &FrontTrace,
    theta: f64,
    p: f64,
    t_shift: f64,
) -> Result<CenterlineBound> {
    if !(p > 3.0) {
        return Err(Error::param("p", format!("need p > 3, got {p}")));
    }
    if !(t_shift > 0.0) {
        return Err(Error::param("T", format!("need T > 0, got {t_shift}")));
    }
    let window: Vec<_> = trace.samples.iter().filter(|s| s.t >= t_shift).collect();
    if window.is_empty() {
        return Err(Error::WindowTooShort(format!(
            "no samples at t >= {t_shift}"
        )));
    }
    let e = 1.0 / (p - 1.0);
    let mut c = f64::INFINITY;
    for s in &window {
        let excess = s.u_center - theta;
        if excess < 0.0 {
            return Err(Error::OutsideValidity(format!(
                "u(0,t) = {} < theta at t = {}",
                s.u_center, s.t
            )));
        }
        c = c.min(excess * (s.t + t_shift).powf(e));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter(|s| s.u_center > theta)
        .map(|s| ((s.t + t_shift).ln(), (s.u_center - theta).ln()))
        .unzip();
    let fit = fit_line(&lx, &ly);
    Ok(CenterlineBound {
        c,
        t_shift,
        samples: window.len(),
        decay_slope: fit.map(|f| f.slope),
        r_squared: fit.map(|f| f.r_squared),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed-step RK4 to `Y = 10³`, `h = 5·10⁻⁴`, independent of the adaptive
    /// path (value of `y^{2/3} φ` at the endpoint for p = 4, m = 2, θ = 0.5).
    const A_P4: f64 = 0.081_94;

    fn rk4_endpoint(p: f64, m: f64, theta: f64, gamma: f64, y_end: f64, h: f64) -> f64 {
        let d = m * theta.powf(m - 1.0);
        let f = |y: f64, a: f64, b: f64| (b, rhs(p, d, y, a, b));
        let (mut y, mut a, mut b) = (0.0, gamma, 0.0);
        let n = (y_end / h).round() as usize;
        for _ in 0..n {
            let (k1a, k1b) = f(y, a, b);
            let (k2a, k2b) = f(y + h / 2.0, a + h / 2.0 * k1a, b + h / 2.0 * k1b);
            let (k3a, k3b) = f(y + h / 2.0, a + h / 2.0 * k2a, b + h / 2.0 * k2b);
            let (k4a, k4b) = f(y + h, a + h * k3a, b + h * k3b);
            a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            y += h;
        }
        a * y_end.powf(2.0 / (p - 1.0))
    }

    #[test]
    fn gamma_max_closed_form() {
        assert!((gamma_max(5.0).unwrap() - 0.25f64.powf(0.25)).abs() < 1e-15);
        assert!((gamma_max(4.0).unwrap() - 0.5503).abs() < 1e-4);
        assert!(gamma_max(3.0 + 1e-9).unwrap() < 1e-4);
        assert!(gamma_max(3.0).is_err());
    }

    #[test]
    fn p4_profile_matches_fixed_step_oracle() {
        let gamma = 0.3 * gamma_max(4.0).unwrap();
        let oracle = rk4_endpoint(4.0, 2.0, 0.5, gamma, 1e3, 5e-4);
        assert!((oracle - A_P4).abs() < 5e-6, "oracle {oracle}");
        let prof = solve_phi(4.0, 2.0, 0.5, gamma, 1e3).unwrap();
        assert_eq!(prof.phi[0], gamma);
        assert_eq!(prof.dphi[0], 0.0);
        assert!(prof.phi.iter().all(|&v| v > 0.0));
        assert!(prof.plateau_slope.abs() < PLATEAU_GATE);
        assert!((prof.a - A_P4).abs() / A_P4 < 1e-3, "A = {}", prof.a);
        assert!(prof.max_residual <= 1e-8, "residual {}", prof.max_residual);
        let rep = estimate_A_consistency(&prof).unwrap();
        assert!(
            rep.rel_dev_slope < 0.02 && rep.rel_dev_curvature < 0.02,
            "{rep:?}"
        );
        assert_eq!(prof.eval(-3.7), prof.eval(3.7));
    }

    #[test]
    fn a_is_stable_under_doubling_y_and_tail_matches() {
        let gamma = 0.3 * gamma_max(4.0).unwrap();
        let short = solve_phi(4.0, 2.0, 0.5, gamma, 1e3).unwrap();
        let long = solve_phi(4.0, 2.0, 0.5, gamma, 2e3).unwrap();
        assert!((short.a - long.a).abs() / long.a < 5e-3);
        let y = 2e3;
        let tail = short.eval(y);
        let direct = long.phi[long.phi.len() - 1];
        assert!((tail - direct).abs() / direct < 0.03);
    }

    #[test]
    fn short_range_fails_plateau_gate() {
        let gamma = 0.3 * gamma_max(4.0).unwrap();
        assert!(matches!(
            solve_phi(4.0, 2.0, 0.5, gamma, 10.0),
            Err(Error::PlateauNotReached { .. })
        ));
        assert!(solve_phi(4.0, 2.0, 0.5, 0.6, 1e3).is_err());
    }

    #[test]
    fn n_and_comparison_functions() {
        let gamma = 0.3 * gamma_max(5.0).unwrap();
        let prof = solve_phi(5.0, 2.0, 0.3, gamma, 1e3).unwrap();
        assert!((eval_n(&prof, 0.0, 1.0).unwrap() - gamma).abs() < 1e-15);
        assert_eq!(
            eval_n(&prof, 2.5, 4.0).unwrap(),
            eval_n(&prof, -2.5, 4.0).unwrap()
        );
        let spec = ReactionSpec::new(0.3, 0.2, 5.0, 2.0).unwrap();
        let t = 16.0;
        let w0 = supersolution_w(&prof, &spec, 0.0, t).unwrap();
        assert!((w0 - (0.3 + 0.5 * gamma * t.powf(-0.25))).abs() < 1e-14);
        let k = 1e-3;
        for i in 0..50 {
            let x = i as f64 * 0.5;
            assert!(supersolution_w(&prof, &spec, x, t).unwrap() >= 0.3);
            let lo = subsolution_w(k, 1.0, 5.0, 0.3, x, t).unwrap();
            assert!(lo <= supersolution_w(&prof, &spec, x, t).unwrap());
        }
        assert!(subsolution_w(k, 1.0, 5.0, 0.3, 0.0, 0.0).is_err());
        assert!(supersolution_w(&prof, &spec, 0.0, 1e-6).is_err());
    }

    #[test]
    fn subsolution_sufficiency_region_nonempty() {
        // m = 2, θ = 0.3: need a > 4(θ + k(at)^{−1/(p−1)}).
        let (m, theta, p, k) = (2.0, 0.3, 5.0, 1e-3);
        let a = 1.3;
        let ok = (1..100)
            .map(|i| i as f64)
            .filter(|&t| subsolution_margin(k, a, p, theta, m, 0.0, t).unwrap() > 0.0)
            .count();
        assert!(ok > 90);
        assert!(subsolution_margin(k, 1.0, p, theta, m, 0.0, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn centerline_constant_is_recovered() {
        let p = 5.0;
        let ts: Vec<f64> = (1..200).map(|i| i as f64).collect();
        let mut trace = FrontTrace::from_fronts(&ts, &ts);
        for s in &mut trace.samples {
            s.u_center = 0.3 + 2.0 * (s.t + 1.0).powf(-1.0 / (p - 1.0));
        }
        let b = centerline_lower_bound(&trace, 0.3, p, 1.0).unwrap();
        assert!((b.c - 2.0).abs() < 1e-12);
        assert!((b.decay_slope.unwrap() + 0.25).abs() < 1e-10);
        for s in &mut trace.samples {
            s.u_center = 0.3;
        }
        assert_eq!(centerline_lower_bound(&trace, 0.3, p, 1.0).unwrap().c, 0.0);
        trace.samples[5].u_center = 0.29;
        assert!(centerline_lower_bound(&trace, 0.3, p, 1.0).is_err());
    }
}
