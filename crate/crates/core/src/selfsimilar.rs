//! Self-similar profile `ξ'' = −2y (ξ^{1/m})'` behind a `√t` front, and the
//! Barenblatt source solution.
//!
//! `e(x, t) = ξ(x / 2√t)^{1/m}` solves the porous medium equation on the
//! half-line with `u(0, t) = θ`. The profile is integrated in `y` until `ξ`
//! is small and then in the level variable `u = ξ^{1/m}`, where
//! `dy/du = m u^{m−1} / ξ'` and `dξ'/du = −2y` are regular up to the root.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::interp::{quintic_hermite, MonotoneCubic};
use crate::numerics::ode::{locate_crossing, Dopri5, Flow, Point};

/// Switch to the level variable once `ξ < θ^m · SWITCH`.
pub const SWITCH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Launch {
    /// `ξ'(0) = −2θ^{(m+1)/2}`.
    Imposed,
    /// `ξ'(0)` tuned so that the flux vanishes at the root (Darcy front).
    FreeBoundary,
}

#[derive(Clone, Debug)]
pub struct XiProfile {
    pub m: f64,
    pub theta: f64,
    pub ys: Vec<f64>,
    pub xi: Vec<f64>,
    pub dxi: Vec<f64>,
    pub y0: f64,
    /// `ξ'(0)` used for the launch.
    pub slope0: f64,
    /// `ξ'(y0)`; zero for a Darcy front.
    pub flux_at_root: f64,
    pub launch: Launch,
    interp: MonotoneCubic,
}

enum Outcome {
    /// Root at `y0` with the flux there.
    Root { y0: f64, flux: f64 },
    /// `ξ'` vanished at level `u > 0` before `ξ` did.
    Plateau { level: f64 },
}

struct Shot {
    outcome: Outcome,
    ys: Vec<f64>,
    xi: Vec<f64>,
    dxi: Vec<f64>,
}

fn check(m: f64, theta: f64, tol: f64) -> Result<()> {
    if !(m > 1.0) {
        return Err(Error::param("m", format!("{m} must exceed 1")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", format!("{theta} not in (0,1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("{tol} must be positive")));
    }
    Ok(())
}

fn shoot(m: f64, theta: f64, slope0: f64, tol: f64) -> Result<Shot> {
    let xi0 = theta.powf(m);
    let y_scale = theta.powf(0.5 * (m - 1.0));
    let xi_sw = xi0 * SWITCH;
    let rtol = (tol * 1e-2).clamp(1e-13, 1e-8);
    let mut rhs =
        move |y: f64, s: &[f64; 2]| [s[1], -(2.0 * y / m) * s[0].powf((1.0 - m) / m) * s[1]];
    let solver = Dopri5::new(rtol, 1e-16 * xi0)
        .with_max_step(y_scale / 400.0)
        .with_initial_step(y_scale * 1e-4);

    let mut table: Vec<Point<2>> = Vec::new();
    let start = Point {
        t: 0.0,
        y: [xi0, slope0],
        dy: rhs(0.0, &[xi0, slope0]),
    };
    table.push(start);
    let mut switch: Option<(Point<2>, Point<2>)> = None;
    let mut turned = false;
    solver.integrate(rhs, 0.0, start.y, 1e3 * y_scale, |a, b| {
        if b.y[0] <= xi_sw {
            switch = Some((*a, *b));
            return Flow::Stop;
        }
        if b.y[1] >= 0.0 {
            turned = true;
            return Flow::Stop;
        }
        table.push(*b);
        Flow::Continue
    })?;
    let mut ys: Vec<f64> = table.iter().map(|p| p.t).collect();
    let mut xi: Vec<f64> = table.iter().map(|p| p.y[0]).collect();
    let mut dxi: Vec<f64> = table.iter().map(|p| p.y[1]).collect();
    let Some((a, b)) = switch else {
        let level = table
            .last()
            .map_or(theta, |p| p.y[0].max(0.0).powf(1.0 / m));
        if turned {
            return Ok(Shot {
                outcome: Outcome::Plateau { level },
                ys,
                xi,
                dxi,
            });
        }
        return Err(Error::NoRoot(
            "profile did not reach the switch level".into(),
        ));
    };
    let at = locate_crossing(&mut rhs, &a, &b, |p| p.y[0] - xi_sw, 1e-15 * b.t);
    ys.push(at.t);
    xi.push(at.y[0]);
    dxi.push(at.y[1]);

    // level variable u from u_sw down to 0; state (y, ξ')
    let u_sw = at.y[0].powf(1.0 / m);
    let y_cap = 50.0 * (at.t + y_scale);
    let mut level_rhs =
        move |u: f64, s: &[f64; 2]| [m * u.max(0.0).powf(m - 1.0) / s[1], -2.0 * s[0]];
    let level_solver = Dopri5::new(rtol, 1e-16 * y_scale)
        .with_max_step(u_sw / 50.0)
        .with_initial_step(u_sw * 1e-4);
    let mut plateau: Option<f64> = None;
    let end = level_solver.integrate(&mut level_rhs, u_sw, [at.t, at.y[1]], 0.0, |_, b| {
        if b.y[1] >= 0.0 || b.y[0] > y_cap {
            plateau = Some(b.t);
            return Flow::Stop;
        }
        if b.t > 0.0 {
            ys.push(b.y[0]);
            xi.push(b.t.powf(m));
            dxi.push(b.y[1]);
        }
        Flow::Continue
    });
    let end = match end {
        Ok(p) => p,
        // a step-size collapse while ξ' → 0 is the plateau case
        Err(Error::Integration(_)) if dxi.last().is_some_and(|d| d.abs() < 1e-6 * slope0.abs()) => {
            let level = xi.last().map_or(0.0, |x| x.powf(1.0 / m));
            return Ok(Shot {
                outcome: Outcome::Plateau { level },
                ys,
                xi,
                dxi,
            });
        }
        Err(e) => return Err(e),
    };
    if let Some(level) = plateau {
        return Ok(Shot {
            outcome: Outcome::Plateau { level },
            ys,
            xi,
            dxi,
        });
    }
    let y0 = end.y[0];
    let flux = end.y[1];
    ys.push(y0);
    xi.push(0.0);
    dxi.push(flux);
    Ok(Shot {
        outcome: Outcome::Root { y0, flux },
        ys,
        xi,
        dxi,
    })
}

fn into_profile(m: f64, theta: f64, slope0: f64, launch: Launch, shot: Shot) -> Result<XiProfile> {
    let Outcome::Root { y0, flux } = shot.outcome else {
        let level = match shot.outcome {
            Outcome::Plateau { level } => level,
            _ => unreachable!(),
        };
        return Err(Error::NoRoot(format!(
            "xi' reached 0 at level u = {level} before xi did"
        )));
    };
    let Shot { ys, xi, dxi, .. } = shot;
    if ys.windows(2).any(|w| w[1] <= w[0]) || xi.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::NotBracketed(
            "profile table is not strictly monotone".into(),
        ));
    }
    let interp = MonotoneCubic::new(ys.clone(), xi.clone(), Some(dxi.clone()));
    Ok(XiProfile {
        m,
        theta,
        ys,
        xi,
        dxi,
        y0,
        slope0,
        flux_at_root: flux,
        launch,
        interp,
    })
}

/// Profile with the imposed launch `ξ(0) = θ^m`, `ξ'(0) = −2θ^{(m+1)/2}`.
pub fn shoot_xi(m: f64, theta: f64, tol: f64) -> Result<XiProfile> {
    check(m, theta, tol)?;
    let slope0 = -2.0 * theta.powf(0.5 * (m + 1.0));
    let shot = shoot(m, theta, slope0, tol)?;
    into_profile(m, theta, slope0, Launch::Imposed, shot)
}

/// Profile whose launch slope is chosen by bisection so that `ξ'(y0) = 0`,
/// the front condition of the porous medium equation.
pub fn shoot_xi_free_boundary(m: f64, theta: f64, tol: f64) -> Result<XiProfile> {
    check(m, theta, tol)?;
    let reference = -2.0 * theta.powf(0.5 * (m + 1.0));
    let hits_root = |s: f64| -> Result<bool> {
        Ok(matches!(
            shoot(m, theta, s, tol)?.outcome,
            Outcome::Root { .. }
        ))
    };
    let mut steep = reference;
    let mut tries = 0;
    while !hits_root(steep)? {
        steep *= 2.0;
        tries += 1;
        if tries > 20 {
            return Err(Error::NotBracketed("no launch slope reaches zero".into()));
        }
    }
    let mut shallow = 0.1 * reference;
    tries = 0;
    while hits_root(shallow)? {
        shallow *= 0.5;
        tries += 1;
        if tries > 40 {
            return Err(Error::NotBracketed(
                "every launch slope reaches zero".into(),
            ));
        }
    }
    while (steep - shallow).abs() > 1e-14 * steep.abs() {
        let mid = 0.5 * (steep + shallow);
        if hits_root(mid)? {
            steep = mid;
        } else {
            shallow = mid;
        }
    }
    let shot = shoot(m, theta, steep, tol)?;
    into_profile(m, theta, steep, Launch::FreeBoundary, shot)
}

impl XiProfile {
    /// `ξ(y)` by monotone cubic interpolation; zero for `y ≥ y0`.
    pub fn xi_at(&self, y: f64) -> f64 {
        if y >= self.y0 {
            0.0
        } else {
            self.interp.eval(y.max(0.0)).max(0.0)
        }
    }

    /// Largest residual of the profile equation over `[0, frac · y0]`,
    /// evaluated at the interval midpoints of the table through quintic
    /// Hermite reconstruction.
    pub fn residual(&self, frac: f64) -> f64 {
        let m = self.m;
        let second = |y: f64, xi: f64, d: f64| -(2.0 * y / m) * xi.powf((1.0 - m) / m) * d;
        let mut worst = 0.0f64;
        for i in 0..self.ys.len() - 1 {
            let (a, b) = (self.ys[i], self.ys[i + 1]);
            if b > frac * self.y0 {
                break;
            }
            let fa = [self.xi[i], self.dxi[i], second(a, self.xi[i], self.dxi[i])];
            let fb = [
                self.xi[i + 1],
                self.dxi[i + 1],
                second(b, self.xi[i + 1], self.dxi[i + 1]),
            ];
            let y = 0.5 * (a + b);
            let [v, d, dd] = quintic_hermite(a, b, fa, fb, y);
            worst = worst.max((dd - second(y, v, d)).abs());
        }
        worst
    }
}

/// `e(x, t) = ξ(|x| / 2√t)^{1/m}`.
pub fn eval_e(profile: &XiProfile, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("t", format!("{t} must be positive")));
    }
    let y = x.abs() / (2.0 * t.sqrt());
    Ok(profile.xi_at(y).powf(1.0 / profile.m))
}

/// Barenblatt source solution of `u_t = (u^m)_xx`:
/// `u = t^{−α} (C − κ x² t^{−2α})_+^{1/(m−1)}`, `α = 1/(m+1)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Barenblatt {
    pub m: f64,
    pub c: f64,
    pub kappa: f64,
    pub alpha: f64,
}

impl Barenblatt {
    pub fn with_mass(m: f64, mass: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::param("m", format!("{m} must exceed 1")));
        }
        if !(mass > 0.0) {
            return Err(Error::param(
                "total_mass",
                format!("{mass} must be positive"),
            ));
        }
        let k = 1.0 / (m - 1.0);
        let kappa = (m - 1.0) / (2.0 * m * (m + 1.0));
        let beta = libm::tgamma(0.5) * libm::tgamma(k + 1.0) / libm::tgamma(k + 1.5);
        let c = (mass * kappa.sqrt() / beta).powf(1.0 / (k + 0.5));
        Ok(Barenblatt {
            m,
            c,
            kappa,
            alpha: 1.0 / (m + 1.0),
        })
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        let inner = self.c - self.kappa * x * x * t.powf(-2.0 * self.alpha);
        if inner <= 0.0 {
            0.0
        } else {
            t.powf(-self.alpha) * inner.powf(1.0 / (self.m - 1.0))
        }
    }

    pub fn support_edge(&self, t: f64) -> f64 {
        (self.c / self.kappa).sqrt() * t.powf(self.alpha)
    }

    /// `d/dt` of the support edge.
    pub fn front_speed(&self, t: f64) -> f64 {
        self.alpha * self.support_edge(t) / t
    }
}

/// Barenblatt value for the given mass.
pub fn barenblatt(m: f64, total_mass: f64, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("t", format!("{t} must be positive")));
    }
    Ok(Barenblatt::with_mass(m, total_mass)?.value(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature;

    /// Classical RK4 in the original variables at fixed step `h`, stopping
    /// at the first zero of ξ located by bisection on a partial step.
    fn rk4_root(m: f64, theta: f64, slope0: f64, h: f64) -> f64 {
        let f = |y: f64, s: [f64; 2]| -> [f64; 2] {
            let x = s[0].max(1e-300);
            [s[1], -(2.0 * y / m) * x.powf((1.0 - m) / m) * s[1]]
        };
        let step = |y: f64, s: [f64; 2], h: f64| -> [f64; 2] {
            let k1 = f(y, s);
            let k2 = f(
                y + h / 2.0,
                [s[0] + h / 2.0 * k1[0], s[1] + h / 2.0 * k1[1]],
            );
            let k3 = f(
                y + h / 2.0,
                [s[0] + h / 2.0 * k2[0], s[1] + h / 2.0 * k2[1]],
            );
            let k4 = f(y + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
            [
                s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ]
        };
        let mut y = 0.0;
        let mut s = [theta.powf(m), slope0];
        loop {
            let next = step(y, s, h);
            if next[0] <= 0.0 {
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if step(y, s, mid)[0] > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return y + 0.5 * (lo + hi);
            }
            s = next;
            y += h;
        }
    }

    #[test]
    fn root_matches_fixed_step_fixture() {
        // frozen from rk4_root(2.0, 0.5, -2 * 0.5^1.5, 1e-6)
        let fixture = 0.382_226;
        let oracle = rk4_root(2.0, 0.5, -2.0 * 0.5f64.powf(1.5), 1e-6);
        assert!((oracle - fixture).abs() < 5e-7, "oracle {oracle}");
        let prof = shoot_xi(2.0, 0.5, 1e-10).unwrap();
        assert!((prof.y0 - fixture).abs() < 5e-7, "y0 = {}", prof.y0);
        assert!(prof.y0 > 0.0 && prof.y0 < 0.5f64.sqrt());
    }

    #[test]
    fn launch_conditions_are_exact() {
        let prof = shoot_xi(2.0, 0.5, 1e-10).unwrap();
        assert_eq!(prof.xi[0], 0.25);
        assert_eq!(prof.dxi[0], -2.0 * 0.5f64.powf(1.5));
        assert_eq!(prof.slope0, prof.dxi[0]);
        assert_eq!(*prof.xi.last().unwrap(), 0.0);
        assert!(prof.xi.windows(2).all(|w| w[1] < w[0]));
        assert!(
            prof.residual(0.9) <= 1e-6 * 0.25,
            "residual {}",
            prof.residual(0.9)
        );
    }

    #[test]
    fn self_similar_values() {
        let prof = shoot_xi(2.0, 0.3, 1e-10).unwrap();
        for t in [0.1, 1.0, 37.0] {
            assert!((eval_e(&prof, 0.0, t).unwrap() - 0.3).abs() < 1e-15);
            assert_eq!(eval_e(&prof, 2.0 * prof.y0 * t.sqrt(), t).unwrap(), 0.0);
        }
        assert!(eval_e(&prof, 1.0, 0.0).is_err());
    }

    #[test]
    fn interpolation_matches_reintegration() {
        let prof = shoot_xi(2.0, 0.5, 1e-10).unwrap();
        let y_half = 0.5 * prof.y0;
        let m = 2.0;
        let solver = Dopri5::new(1e-13, 1e-18);
        let end = solver
            .integrate(
                |y, s: &[f64; 2]| [s[1], -(2.0 * y / m) * s[0].powf((1.0 - m) / m) * s[1]],
                0.0,
                [0.25, prof.slope0],
                y_half,
                |_, _| Flow::Continue,
            )
            .unwrap();
        let direct = end.y[0].powf(1.0 / m);
        let t = 2.0f64;
        let via_e = eval_e(&prof, y_half * 2.0 * t.sqrt(), t).unwrap();
        assert!((via_e - direct).abs() < 1e-8, "{via_e} vs {direct}");
    }

    #[test]
    fn free_boundary_profile_has_zero_flux() {
        let prof = shoot_xi_free_boundary(2.0, 0.5, 1e-10).unwrap();
        assert!(
            prof.flux_at_root.abs() < 1e-5 * prof.slope0.abs(),
            "flux {}",
            prof.flux_at_root
        );
        let imposed = shoot_xi(2.0, 0.5, 1e-10).unwrap();
        assert!(prof.slope0.abs() < imposed.slope0.abs());
        assert!(prof.y0 > imposed.y0);
        // mass balance: ξ'(0) = −2 ∫_0^{y0} ξ^{1/m}
        let mass =
            quadrature::integrate(|y| prof.xi_at(y).sqrt(), 0.0, prof.y0, 1e-10, 0.0).unwrap();
        assert!((prof.slope0 + 2.0 * mass).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(shoot_xi(1.0, 0.5, 1e-10).is_err());
        assert!(shoot_xi(2.0, 1.0, 1e-10).is_err());
        assert!(shoot_xi(2.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn barenblatt_normalisation_and_scaling() {
        for m in [1.5, 2.0, 3.0] {
            let b = Barenblatt::with_mass(m, 1.7).unwrap();
            let t = 2.5;
            let edge = b.support_edge(t);
            let mass = quadrature::integrate(|x| b.value(x, t), -edge, edge, 1e-12, 0.0).unwrap();
            assert!((mass - 1.7).abs() < 1e-8, "m = {m}: {mass}");
            assert!((b.support_edge(1.0) - (b.c / b.kappa).sqrt()).abs() < 1e-15);
            for x in [0.0, 0.3, 0.9 * edge] {
                let scaled = t.powf(-b.alpha) * b.value(x * t.powf(-b.alpha), 1.0);
                assert!((b.value(x, t) - scaled).abs() <= 1e-14 * scaled.max(1e-300));
            }
        }
        assert!(barenblatt(2.0, 1.0, 0.0, 0.0).is_err());
        assert!(Barenblatt::with_mass(2.0, -1.0).is_err());
    }
}
