//! Front-law fits and comparison checks on recorded traces.
//!
//! All fits use the trailing half of the trace in `log t`, counted from the
//! first sample with `t > 0` and a defined front.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::bisect;
use crate::numerics::regression::fit_line;
use crate::pme_solver::{FrontTrace, Snapshot, TraceSample};
use crate::selfsimilar::XiProfile;

/// Fits need at least this many samples in the window.
pub const MIN_SAMPLES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub t_a: f64,
    pub t_b: f64,
    pub samples: usize,
}

/// Samples of the trailing half (in `log t`) with a defined right front.
pub fn trailing_window(trace: &FrontTrace) -> Result<(Vec<TraceSample>, Window)> {
    let fronts: Vec<TraceSample> = trace
        .samples
        .iter()
        .filter(|s| s.t > 0.0 && s.r.is_some())
        .copied()
        .collect();
    let (Some(first), Some(last)) = (fronts.first(), fronts.last()) else {
        return Err(Error::WindowTooShort(
            "no samples with t > 0 and a front".into(),
        ));
    };
    let t_a = (first.t * last.t).sqrt();
    let window: Vec<TraceSample> = fronts
        .iter()
        .filter(|s| s.t >= t_a * (1.0 - 1e-12))
        .copied()
        .collect();
    if window.len() < MIN_SAMPLES {
        return Err(Error::WindowTooShort(format!(
            "{} samples in [{t_a}, {}], need {MIN_SAMPLES}",
            window.len(),
            last.t
        )));
    }
    let w = Window {
        t_a: window[0].t,
        t_b: last.t,
        samples: window.len(),
    };
    Ok((window, w))
}

fn front(s: &TraceSample) -> f64 {
    s.r.expect("window samples carry a front")
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SqrtFit {
    pub y0_fit: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub window: Window,
}

/// Least-squares slope of `r` against `√t` (with intercept), halved.
pub fn fit_sqrt_law(trace: &FrontTrace) -> Result<SqrtFit> {
    let (win, window) = trailing_window(trace)?;
    if window.t_b < 10.0 * window.t_a {
        return Err(Error::WindowTooShort(format!(
            "window [{}, {}] spans less than a decade",
            window.t_a, window.t_b
        )));
    }
    let xs: Vec<f64> = win.iter().map(|s| s.t.sqrt()).collect();
    let ys: Vec<f64> = win.iter().map(front).collect();
    let fit =
        fit_line(&xs, &ys).ok_or_else(|| Error::WindowTooShort("degenerate window".into()))?;
    let y0_fit = 0.5 * fit.slope;
    if !(y0_fit > 0.0) {
        return Err(Error::OutsideValidity(format!(
            "nonpositive leading coefficient {y0_fit}"
        )));
    }
    Ok(SqrtFit {
        y0_fit,
        intercept: fit.intercept,
        slope_stderr: 0.5 * fit.slope_stderr,
        r_squared: fit.r_squared,
        window,
    })
}

/// Grid spacing recorded with the trace; traces without a grid fall back
/// to a relative floor well below any front position.
pub fn resolution(trace: &FrontTrace) -> f64 {
    match trace.grid {
        Some(g) => g.dx(),
        None => {
            let r_max = trace.samples.iter().filter_map(|s| s.r).fold(0.0, f64::max);
            1e-12 * r_max.max(1.0)
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CorrectionFit {
    pub q_fit: f64,
    pub q_stderr: f64,
    /// `exp(intercept)` of the log-log fit.
    pub prefactor: f64,
    pub r_squared: f64,
    /// Samples whose correction was below `floor` and floored there.
    pub floored: usize,
    pub floor: f64,
    pub y0: f64,
    pub window: Window,
}

/// Log-log slope of `max(r − 2y0√t, dx)` over the trailing window, with
/// `y0` supplied rather than fitted.
pub fn fit_correction(trace: &FrontTrace, y0: f64) -> Result<CorrectionFit> {
    if !(y0 > 0.0) {
        return Err(Error::param("y0", format!("{y0} must be positive")));
    }
    let floor = resolution(trace);
    let (win, window) = trailing_window(trace)?;
    let mut floored = 0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = win
        .iter()
        .map(|s| {
            let c = front(s) - 2.0 * y0 * s.t.sqrt();
            let c = if c < floor {
                floored += 1;
                floor
            } else {
                c
            };
            (s.t.ln(), c.ln())
        })
        .unzip();
    if floored == win.len() {
        return Err(Error::Unresolved);
    }
    let fit = fit_line(&xs, &ys).ok_or(Error::Unresolved)?;
    Ok(CorrectionFit {
        q_fit: fit.slope,
        q_stderr: fit.slope_stderr,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        floored,
        floor,
        y0,
        window,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundReport {
    pub p: f64,
    pub y0: f64,
    pub window: Window,
    /// `1/2 − 1/(p+1)`.
    pub upper_exponent: f64,
    /// Smallest `H` with `r ≤ 2y0√t + H t^{1/2−1/(p+1)}` on the window
    /// (negative when even `H = 0` leaves room).
    pub big_h: f64,
    /// `1/2 − 1/(p−1)` for `p > 3`.
    pub lower_exponent: Option<f64>,
    /// For `p > 3`: largest `h` with `r ≥ 2y0√t + h t^{1/2−1/(p−1)}`.
    /// For `p ≤ 3`: smallest `h ≥ 0` with `r ≥ 2y0√t − h`.
    pub h: f64,
    /// `min (r − 2y0√t)` over the window.
    pub min_excess: f64,
    pub max_excess: f64,
    /// `p ≤ 3`: whether `r ≥ 2y0√t − dx` at every window sample.
    pub unshifted_holds: Option<bool>,
    pub tolerance: f64,
}

pub fn check_bounds(trace: &FrontTrace, y0: f64, p: f64) -> Result<BoundReport> {
    if !(p > 1.0) {
        return Err(Error::param("p", format!("{p} must exceed 1")));
    }
    let (win, window) = trailing_window(trace)?;
    let tolerance = resolution(trace);
    let qu = 0.5 - 1.0 / (p + 1.0);
    let excess: Vec<(f64, f64)> = win
        .iter()
        .map(|s| (s.t, front(s) - 2.0 * y0 * s.t.sqrt()))
        .collect();
    let big_h = excess
        .iter()
        .map(|&(t, e)| e / t.powf(qu))
        .fold(f64::NEG_INFINITY, f64::max);
    let min_excess = excess.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let max_excess = excess.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let (lower_exponent, h, unshifted_holds) = if p > 3.0 {
        let ql = 0.5 - 1.0 / (p - 1.0);
        let h = excess
            .iter()
            .map(|&(t, e)| e / t.powf(ql))
            .fold(f64::INFINITY, f64::min);
        (Some(ql), h, None)
    } else {
        (
            (None),
            (-min_excess).max(0.0),
            Some(min_excess >= -tolerance),
        )
    };
    Ok(BoundReport {
        p,
        y0,
        window,
        upper_exponent: qu,
        big_h,
        lower_exponent,
        h,
        min_excess,
        max_excess,
        unshifted_holds,
        tolerance,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThetaBound {
    /// Smallest `G` with `θ(t) ≤ G t^{1/2−1/(p+1)}` on the window.
    pub g: f64,
    /// Log-log slope of the positive `θ(t)` values.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub exponent: f64,
    pub window: Window,
    /// Window samples where `u(0,t) ≤ θ`, skipped.
    pub missing: usize,
}

pub fn theta_level_bound(trace: &FrontTrace, p: f64) -> Result<ThetaBound> {
    let (win, window) = trailing_window(trace)?;
    let q = 0.5 - 1.0 / (p + 1.0);
    let present: Vec<(f64, f64)> = win
        .iter()
        .filter_map(|s| s.theta_pos.map(|x| (s.t, x)))
        .collect();
    if present.is_empty() {
        return Err(Error::OutsideValidity(
            "theta_pos absent: the centre fell below theta".into(),
        ));
    }
    let g = present
        .iter()
        .map(|&(t, x)| x / t.powf(q))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let (lx, ly): (Vec<f64>, Vec<f64>) = present
        .iter()
        .filter(|e| e.1 > 0.0)
        .map(|&(t, x)| (t.ln(), x.ln()))
        .unzip();
    let fit = fit_line(&lx, &ly);
    Ok(ThetaBound {
        g,
        slope: fit.map(|f| f.slope),
        slope_stderr: fit.map(|f| f.slope_stderr),
        exponent: q,
        window,
        missing: win.len() - present.len(),
    })
}

/// Anything that can be sampled on an `(x, t)` grid. `Ok(None)` means the
/// point lies outside the object's domain and is skipped.
pub trait Field {
    fn value(&self, x: f64, t: f64) -> Result<Option<f64>>;
}

/// A PDE run, sampled at its stored snapshot times only.
pub struct SnapshotField<'a> {
    pub snapshots: &'a [Snapshot],
}

impl SnapshotField<'_> {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.state.t).collect()
    }
}

impl Field for SnapshotField<'_> {
    fn value(&self, x: f64, t: f64) -> Result<Option<f64>> {
        let i = self.snapshots.partition_point(|s| s.state.t < t);
        for j in [i.saturating_sub(1), i] {
            if let Some(s) = self.snapshots.get(j) {
                if (s.state.t - t).abs() <= 1e-9 * t.abs().max(1.0) {
                    return Ok(Some(s.eval(x)));
                }
            }
        }
        Err(Error::NotAlignable(format!("no snapshot at t = {t}")))
    }
}

/// `e(|x|, t)`, optionally restricted to `x ≥ 0`.
pub struct SelfSimilarField<'a> {
    pub profile: &'a XiProfile,
    pub half_line: bool,
}

fn e_value(profile: &XiProfile, x: f64, t: f64) -> f64 {
    let y = x.abs() / (2.0 * t.sqrt());
    profile.xi_at(y).powf(1.0 / profile.m)
}

impl Field for SelfSimilarField<'_> {
    fn value(&self, x: f64, t: f64) -> Result<Option<f64>> {
        if !(t > 0.0) {
            return Err(Error::param("t", format!("{t} must be positive")));
        }
        if self.half_line && x < 0.0 {
            return Ok(None);
        }
        Ok(Some(e_value(self.profile, x, t)))
    }
}

/// `e(|x| − h(t), t)` with `h(t) = M t^{1/2−1/(p+1)}`, on `|x| ≥ h(t)`.
pub struct TranslatedSupersolution<'a> {
    pub profile: &'a XiProfile,
    pub shift: f64,
    pub exponent: f64,
}

impl TranslatedSupersolution<'_> {
    pub fn h(&self, t: f64) -> f64 {
        self.shift * t.powf(self.exponent)
    }
}

impl Field for TranslatedSupersolution<'_> {
    fn value(&self, x: f64, t: f64) -> Result<Option<f64>> {
        if !(t > 0.0) {
            return Err(Error::param("t", format!("{t} must be positive")));
        }
        let h = self.h(t);
        if x.abs() < h {
            return Ok(None);
        }
        Ok(Some(e_value(self.profile, x.abs() - h, t)))
    }
}

/// Smallest shift constant `M` that puts the translated profile above the
/// snapshot on `x ≥ h(t)` at the snapshot time, and above the level set:
/// `M t^q ≥ θ(t)` for every later `(t, θ(t))` given.
pub fn translation_constant(
    snapshot: &Snapshot,
    profile: &XiProfile,
    p: f64,
    theta_positions: &[(f64, f64)],
) -> f64 {
    let q = 0.5 - 1.0 / (p + 1.0);
    let t = snapshot.state.t;
    let theta = profile.theta;
    let m = profile.m;
    let width = 2.0 * t.sqrt();
    // `e(z, t) = v` solved for `z ≥ 0`
    let inverse = |v: f64| -> f64 {
        if v >= theta {
            return 0.0;
        }
        let target = v.powf(m);
        let y = bisect(|y| profile.xi_at(y) - target, 0.0, profile.y0, 1e-14, 200)
            .unwrap_or(profile.y0);
        width * y
    };
    let g = &snapshot.grid;
    let mut h_needed = 0.0f64;
    for (i, &u) in snapshot.state.u.iter().enumerate() {
        let x = g.x(i);
        if x < 0.0 || u <= 0.0 {
            continue;
        }
        h_needed = h_needed.max(x - inverse(u));
    }
    let from_level = theta_positions
        .iter()
        .map(|&(s, x)| x / s.powf(q))
        .fold(0.0, f64::max);
    (h_needed / t.powf(q)).max(from_level)
}

/// `(1 + α(τ)) ξ^{1/m}(x / 2β(τ))` on `x ≥ 0`, with `τ = t − t_start`,
/// `α = (a/θ)(T + τ)^{−1/(p−1)}` and
/// `β = (T₁ + τ)^{1/2}(1 + k(T₁ + τ)^{−1/(p−1)})`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledSubsolution<'a> {
    pub profile: &'a XiProfile,
    pub p: f64,
    pub a: f64,
    pub k: f64,
    pub t_shift: f64,
    pub t1: f64,
    pub t_start: f64,
}

impl ScaledSubsolution<'_> {
    pub fn alpha(&self, tau: f64) -> f64 {
        self.a / self.profile.theta * (self.t_shift + tau).powf(-1.0 / (self.p - 1.0))
    }

    pub fn beta(&self, tau: f64) -> f64 {
        let s = self.t1 + tau;
        s.sqrt() * (1.0 + self.k * s.powf(-1.0 / (self.p - 1.0)))
    }

    /// `(1+α)^{m−1} − 2ββ'`; the construction is a subsolution where this
    /// is positive.
    pub fn sufficiency_margin(&self, tau: f64) -> f64 {
        let p = self.p;
        let s = self.t1 + tau;
        let ks = self.k * s.powf(-1.0 / (p - 1.0));
        let two_beta_beta = (1.0 + ks) * (1.0 + ks * (1.0 - 2.0 / (p - 1.0)));
        (1.0 + self.alpha(tau)).powf(self.profile.m - 1.0) - two_beta_beta
    }
}

impl Field for ScaledSubsolution<'_> {
    fn value(&self, x: f64, t: f64) -> Result<Option<f64>> {
        let tau = t - self.t_start;
        if tau < 0.0 || x < 0.0 {
            return Ok(None);
        }
        let y = x / (2.0 * self.beta(tau));
        Ok(Some(
            (1.0 + self.alpha(tau)) * self.profile.xi_at(y).powf(1.0 / self.profile.m),
        ))
    }
}

/// Pointwise field from a closure.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, f64) -> Option<f64>> Field for FnField<F> {
    fn value(&self, x: f64, t: f64) -> Result<Option<f64>> {
        Ok((self.0)(x, t))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OrderingReport {
    /// `max (lower − upper)₊` over points where both are defined.
    pub max_violation: f64,
    pub worst: Option<(f64, f64)>,
    /// Largest `|upper|` seen, for relative statements.
    pub scale: f64,
    pub compared: usize,
}

impl OrderingReport {
    pub fn relative_violation(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_violation / self.scale
        } else {
            self.max_violation
        }
    }
}

/// Checks `lower ≤ upper` on the product grid `xs × ts`.
pub fn verify_ordering(
    lower: &dyn Field,
    upper: &dyn Field,
    xs: &[f64],
    ts: &[f64],
) -> Result<OrderingReport> {
    if xs.is_empty() || ts.is_empty() {
        return Err(Error::NotAlignable("empty sample grid".into()));
    }
    let mut rep = OrderingReport {
        max_violation: 0.0,
        worst: None,
        scale: 0.0,
        compared: 0,
    };
    for &t in ts {
        for &x in xs {
            let (Some(lo), Some(hi)) = (lower.value(x, t)?, upper.value(x, t)?) else {
                continue;
            };
            rep.compared += 1;
            rep.scale = rep.scale.max(hi.abs());
            let v = lo - hi;
            if v > rep.max_violation {
                rep.max_violation = v;
                rep.worst = Some((x, t));
            }
        }
    }
    Ok(rep)
}
