//! Stationary bumps `(Q^m)'' + f(Q) = 0`, `Q(0) = θ + b`, `Q'(0) = 0`.
//!
//! Below `θ` the reaction vanishes, so `Q^m` continues linearly from the
//! `θ`-crossing `l(b)` to the support end `L(b)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::interp::MonotoneCubic;
use crate::numerics::ode::{locate_crossing, Dopri5, Flow, Point};
use crate::numerics::quadrature;
use crate::reaction::ReactionSpec;

#[derive(Clone, Debug)]
pub struct QbProfile {
    pub b: f64,
    pub theta: f64,
    pub m: f64,
    /// Sample points on `[0, l_b]`.
    pub xs: Vec<f64>,
    pub qs: Vec<f64>,
    /// `(Q^m)'` at the sample points.
    pub flux: Vec<f64>,
    /// `θ + b − Q` at the sample points, kept separately for accuracy near
    /// the top.
    depth: Vec<f64>,
    pub l_b: f64,
    big_l: f64,
    /// `(Q^m)'(l_b)`, negative.
    pub slope_at_l: f64,
    interp: MonotoneCubic,
}

impl QbProfile {
    pub fn big_l(&self) -> f64 {
        self.big_l
    }

    /// `Q_b(|x|)`, with the linear `Q^m` tail on `[l_b, L_b]` and zero
    /// beyond.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        if x <= self.l_b {
            self.interp.eval(x)
        } else if x < self.big_l {
            let w = self.theta.powf(self.m) + self.slope_at_l * (x - self.l_b);
            w.max(0.0).powf(1.0 / self.m)
        } else {
            0.0
        }
    }

    /// Largest relative mismatch between `((Q^m)')²` along the computed
    /// profile and `2m ∫_Q^{θ+b} r^{m−1} f(r) dr` evaluated by quadrature.
    pub fn first_integral_residual(&self, spec: &ReactionSpec) -> Result<f64> {
        let top = self.theta + self.b;
        let mut worst = 0.0f64;
        for (i, (&depth, &flux)) in self.depth.iter().zip(&self.flux).enumerate() {
            if i == 0 {
                continue;
            }
            let rhs = 2.0 * self.m * energy_below(spec, top, depth)?;
            if rhs <= 0.0 {
                continue;
            }
            worst = worst.max((flux * flux - rhs).abs() / rhs);
        }
        Ok(worst)
    }
}

/// `∫_{top−depth}^{top} r^{m−1} f(r) dr`, integrated in the depth variable.
pub fn energy_below(spec: &ReactionSpec, top: f64, depth: f64) -> Result<f64> {
    let m = spec.m;
    let depth = depth.min(top - spec.theta);
    if !(depth > 0.0) {
        return Ok(0.0);
    }
    quadrature::integrate(
        |s| (top - s).powf(m - 1.0) * spec.f(top - s),
        0.0,
        depth,
        1e-14,
        0.0,
    )
}

/// `∫_q^{top} r^{m−1} f(r) dr`.
pub fn energy(spec: &ReactionSpec, q: f64, top: f64) -> Result<f64> {
    let m = spec.m;
    let lo = q.max(spec.theta);
    if lo >= top {
        return Ok(0.0);
    }
    quadrature::integrate(|r| r.powf(m - 1.0) * spec.f(r), lo, top, 1e-14, 0.0)
}

fn check_b(spec: &ReactionSpec, b: f64) -> Result<()> {
    if !(b > 0.0 && b < spec.sigma) {
        return Err(Error::param(
            "b",
            format!("{b} not in (0, sigma = {})", spec.sigma),
        ));
    }
    Ok(())
}

/// Shoots `Q_b` for `b ∈ (0, σ)`.
pub fn shoot_qb(spec: &ReactionSpec, b: f64) -> Result<QbProfile> {
    check_b(spec, b)?;
    bump_profile(spec, b)
}

/// Shoots the bump of height `θ + b` for any `b ∈ (0, 1 − θ)`. Outside
/// `(0, σ)` the reaction is no longer a pure power, but the bump still
/// exists and is a stationary solution.
///
/// The second-order form in `W = Q^m` is integrated directly: it is regular
/// at `x = 0` (`W'' = −f(θ+b)`), so no series launch is needed.
pub fn bump_profile(spec: &ReactionSpec, b: f64) -> Result<QbProfile> {
    let theta = spec.theta;
    let m = spec.m;
    if !(b > 0.0 && theta + b < 1.0) {
        return Err(Error::param("b", format!("{b} not in (0, 1 - theta)")));
    }
    let top = theta + b;
    let w_theta = theta.powf(m);
    let peak_f = spec.f(top);
    if !(peak_f > 0.0) {
        return Err(Error::NoRoot(format!(
            "f(theta+b) = {peak_f} is not positive"
        )));
    }
    // time scale of the first drop in W by its own size
    let w_top = top.powf(m);
    let scale = (2.0 * (w_top - w_theta) / peak_f).sqrt();
    // state: deficit D = W(0) − W and flux W'
    let depth_of = move |d: f64| -> f64 { -top * ((-d / w_top).ln_1p() / m).exp_m1() };
    let mut rhs = move |_: f64, y: &[f64; 2]| [-y[1], -spec.f(top - depth_of(y[0].max(0.0)))];
    let solver = Dopri5::new(1e-13, 1e-16 * w_top).with_initial_step(1e-3 * scale);

    let d_theta = w_top - w_theta;
    let mut table: Vec<Point<2>> = Vec::new();
    let mut crossing: Option<(Point<2>, Point<2>)> = None;
    let mut stalled = false;
    let start = Point {
        t: 0.0,
        y: [0.0, 0.0],
        dy: rhs(0.0, &[0.0, 0.0]),
    };
    table.push(start);
    solver.integrate(rhs, 0.0, start.y, 1e12 * scale, |prev, next| {
        if next.y[0] >= d_theta {
            crossing = Some((*prev, *next));
            return Flow::Stop;
        }
        if next.y[1] >= 0.0 {
            stalled = true;
            return Flow::Stop;
        }
        table.push(*next);
        Flow::Continue
    })?;
    if stalled {
        return Err(Error::NoRoot(
            "flux vanished before the ignition level".into(),
        ));
    }
    let (a, z) = crossing.ok_or_else(|| Error::NoRoot("ignition level not reached".into()))?;
    let hit = locate_crossing(&mut rhs, &a, &z, |p| p.y[0] - d_theta, 1e-15 * z.t);
    let l_b = hit.t;
    let slope_at_l = hit.y[1];
    table.push(Point {
        t: l_b,
        y: [d_theta, slope_at_l],
        dy: hit.dy,
    });

    let xs: Vec<f64> = table.iter().map(|p| p.t).collect();
    let mut depth: Vec<f64> = table.iter().map(|p| depth_of(p.y[0])).collect();
    *depth.last_mut().expect("nonempty") = b;
    let qs: Vec<f64> = depth.iter().map(|d| top - d).collect();
    let flux: Vec<f64> = table.iter().map(|p| p.y[1]).collect();
    let dqs: Vec<f64> = qs
        .iter()
        .zip(&flux)
        .map(|(&q, &fl)| fl / (m * q.powf(m - 1.0)))
        .collect();
    let interp = MonotoneCubic::new(xs.clone(), qs.clone(), Some(dqs));
    let big_l = l_b + w_theta / slope_at_l.abs();
    Ok(QbProfile {
        b,
        theta,
        m,
        xs,
        qs,
        flux,
        depth,
        l_b,
        big_l,
        slope_at_l,
        interp,
    })
}

/// `l(b)` by quadrature of the inverse map `x(Q)`, using `Q = θ + b(1 − w²)`
/// so the inverse square root at the top becomes a smooth integrand.
pub fn l_of_b_quadrature(spec: &ReactionSpec, b: f64) -> Result<f64> {
    check_b(spec, b)?;
    width_to_ignition(spec, b)
}

fn width_to_ignition(spec: &ReactionSpec, b: f64) -> Result<f64> {
    let theta = spec.theta;
    let m = spec.m;
    let top = theta + b;
    let mut failure = None;
    let value = quadrature::integrate(
        |w| {
            let q = top - b * w * w;
            match energy(spec, q, top) {
                Ok(e) if e > 0.0 => m * q.powf(m - 1.0) * 2.0 * b * w / (2.0 * m * e).sqrt(),
                Ok(_) if q >= top => {
                    m * top.powf(m - 1.0) * 2.0 * b
                        / (2.0 * m * top.powf(m - 1.0) * spec.f(top) * b).sqrt()
                }
                Ok(_) => {
                    failure.get_or_insert_with(|| {
                        Error::NoRoot(format!("nonpositive energy at Q = {q}"))
                    });
                    0.0
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        1e-11,
        0.0,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BumpWidths {
    pub b: f64,
    pub l: f64,
    /// `L(b)` from the linear continuation of `Q^m`.
    pub big_l: f64,
    /// `(Q^m)'(l)`.
    pub slope_at_l: f64,
    /// Support end if `Q` itself (rather than `Q^m`) were linear below `θ`.
    pub big_l_q_linear: f64,
    /// Linear continuation written through the mean-value point of the
    /// energy integral, with that point computed exactly.
    pub big_l_mean_value: f64,
}

/// `l(b)` and `L(b)` by quadrature.
pub fn l_and_big_l(spec: &ReactionSpec, b: f64) -> Result<BumpWidths> {
    check_b(spec, b)?;
    widths(spec, b)
}

fn widths(spec: &ReactionSpec, b: f64) -> Result<BumpWidths> {
    let theta = spec.theta;
    let m = spec.m;
    let l = width_to_ignition(spec, b)?;
    let e = energy(spec, theta, theta + b)?;
    if !(e > 0.0) {
        return Err(Error::NoRoot("nonpositive energy integral".into()));
    }
    let slope = -(2.0 * m * e).sqrt();
    let w_theta = theta.powf(m);
    let big_l = l + w_theta / slope.abs();
    let big_l_q_linear = l + m * w_theta / slope.abs();
    // mean-value point: xi^{m-1} = ∫ r^{m-1} f / ∫ f
    let plain = quadrature::integrate(|r| spec.f(r), theta, theta + b, 1e-14, 0.0)?;
    let xi_pow = e / plain;
    let big_l_mean_value = l + w_theta / (2.0 * m * xi_pow * plain).sqrt();
    Ok(BumpWidths {
        b,
        l,
        big_l,
        slope_at_l: slope,
        big_l_q_linear,
        big_l_mean_value,
    })
}

/// `L(b)` with the cross-check values.
#[allow(non_snake_case)]
pub fn L_of_b(spec: &ReactionSpec, b: f64) -> Result<BumpWidths> {
    l_and_big_l(spec, b)
}

/// Solves `L(b) = y` for `b ∈ (0, σ)` by bisection in `log b`.
#[allow(non_snake_case)]
pub fn invert_L(spec: &ReactionSpec, y: f64) -> Result<f64> {
    let sigma = spec.sigma;
    let b_hi0 = sigma * (1.0 - 1e-9);
    let l_hi = widths(spec, b_hi0)?.big_l;
    if !(y > l_hi) {
        return Err(Error::BelowRange {
            target: y,
            minimum: l_hi,
        });
    }
    let mut hi = b_hi0;
    let mut big_hi = l_hi;
    let mut lo = sigma / 2.0;
    let mut big_lo = widths(spec, lo)?.big_l;
    let mut halvings = 0;
    while big_lo <= y {
        if big_lo < big_hi {
            return Err(Error::NonMonotone(format!(
                "L({lo}) = {big_lo} < L({hi}) = {big_hi}"
            )));
        }
        hi = lo;
        big_hi = big_lo;
        lo /= 2.0;
        halvings += 1;
        if halvings > 400 {
            return Err(Error::NotBracketed(format!("no b with L(b) >= {y}")));
        }
        big_lo = widths(spec, lo)?.big_l;
    }
    while (hi - lo) > 1e-10 * hi {
        let mid = (lo * hi).sqrt();
        let big_mid = widths(spec, mid)?.big_l;
        if !(big_mid <= big_lo && big_mid >= big_hi) {
            return Err(Error::NonMonotone(format!(
                "L({mid}) = {big_mid} outside [{big_hi}, {big_lo}]"
            )));
        }
        if big_mid > y {
            lo = mid;
            big_lo = big_mid;
        } else {
            hi = mid;
            big_hi = big_mid;
        }
    }
    Ok((lo * hi).sqrt())
}
