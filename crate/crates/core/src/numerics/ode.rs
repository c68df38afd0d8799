//! Adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.
//!
//! The integrator works on `[f64; N]` states and reports every accepted step
//! to a callback, which may stop the integration. Event location is done by
//! the caller: [`Dopri5::advance`] takes a single untested step of a chosen
//! size, which is enough to bisect on the step length inside the last
//! accepted step.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// A point on the trajectory together with the right-hand side there.
#[derive(Clone, Copy, Debug)]
pub struct Point<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
}

/// What the step callback wants next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn with_initial_step(mut self, h: f64) -> Self {
        self.h_init = Some(h);
        self
    }

    /// One Dormand-Prince step of size `h` from `p`. Returns the fifth-order
    /// solution, the embedded error estimate and the right-hand side at the
    /// new point (first-same-as-last).
    fn trial<F, const N: usize>(f: &mut F, p: &Point<N>, h: f64) -> ([f64; N], [f64; N], [f64; N])
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let k1 = &p.dy;
        let y = &p.y;
        let mut tmp = [0.0; N];

        for i in 0..N {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        let k2 = f(p.t + C2 * h, &tmp);
        for i in 0..N {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        let k3 = f(p.t + C3 * h, &tmp);
        for i in 0..N {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        let k4 = f(p.t + C4 * h, &tmp);
        for i in 0..N {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        let k5 = f(p.t + C5 * h, &tmp);
        for i in 0..N {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let k6 = f(p.t + h, &tmp);
        let mut y_new = [0.0; N];
        for i in 0..N {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let k7 = f(p.t + h, &y_new);
        let mut err = [0.0; N];
        for i in 0..N {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        (y_new, err, k7)
    }

    /// A single step of size `h` without error control.
    pub fn advance<F, const N: usize>(f: &mut F, p: &Point<N>, h: f64) -> Point<N>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let (y, _, dy) = Self::trial(f, p, h);
        Point { t: p.t + h, y, dy }
    }

    fn error_norm<const N: usize>(&self, y0: &[f64; N], y1: &[f64; N], err: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let scale = self.atol + self.rtol * y0[i].abs().max(y1[i].abs());
            let r = err[i] / scale;
            acc += r * r;
        }
        (acc / N as f64).sqrt()
    }

    /// Integrates from `(t0, y0)` towards `t_end` (either direction). The
    /// callback sees each accepted step as `(previous, current)` and may stop
    /// the integration; the last accepted point is returned.
    pub fn integrate<F, C, const N: usize>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        mut on_step: C,
    ) -> Result<Point<N>>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        C: FnMut(&Point<N>, &Point<N>) -> Flow,
    {
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs();
        let mut p = Point {
            t: t0,
            y: y0,
            dy: f(t0, &y0),
        };
        if span == 0.0 {
            return Ok(p);
        }
        let mut h = self
            .h_init
            .unwrap_or_else(|| (span * 1e-4).min(self.h_max))
            .min(self.h_max);
        let mut steps = 0usize;
        loop {
            if steps >= self.max_steps {
                return Err(Error::Integration(format!(
                    "step budget exhausted at t = {}",
                    p.t
                )));
            }
            let remaining = (t_end - p.t) * dir;
            if remaining <= 0.0 {
                return Ok(p);
            }
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            let (y_new, err, k7) = Self::trial(&mut f, &p, dir * h_try);
            let en = self.error_norm(&p.y, &y_new, &err);
            if !en.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                h = h_try * 0.1;
                if p.t + dir * h == p.t {
                    return Err(Error::Integration(format!(
                        "non-finite state near t = {}",
                        p.t
                    )));
                }
                continue;
            }
            steps += 1;
            if en <= 1.0 {
                let next = Point {
                    t: if last { t_end } else { p.t + dir * h_try },
                    y: y_new,
                    dy: k7,
                };
                let flow = on_step(&p, &next);
                p = next;
                if flow == Flow::Stop || last {
                    return Ok(p);
                }
                let fac = if en == 0.0 {
                    5.0
                } else {
                    (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (h_try * fac).min(self.h_max);
            } else {
                let fac = (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
                h = h_try * fac;
                if p.t + dir * h == p.t {
                    return Err(Error::Integration(format!(
                        "step size underflow near t = {}",
                        p.t
                    )));
                }
            }
        }
    }
}

/// Locates `t*` in the step `(from, to)` where `g` changes sign, by bisection
/// on the length of a single step taken from `from`. Returns the point at
/// the crossing (to within `t_tol`).
pub fn locate_crossing<F, G, const N: usize>(
    f: &mut F,
    from: &Point<N>,
    to: &Point<N>,
    g: G,
    t_tol: f64,
) -> Point<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    G: Fn(&Point<N>) -> f64,
{
    let g0 = g(from);
    let mut lo = 0.0;
    let mut hi = to.t - from.t;
    let mut best = *to;
    for _ in 0..200 {
        if (hi - lo).abs() <= t_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let pm = Dopri5::advance(f, from, mid);
        if g(&pm).signum() == g0.signum() && g(&pm) != 0.0 {
            lo = mid;
        } else {
            hi = mid;
            best = pm;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let solver = Dopri5::new(1e-11, 1e-14);
        let end = solver
            .integrate(
                |_, y: &[f64; 1]| [-y[0]],
                0.0,
                [1.0],
                3.0,
                |_, _| Flow::Continue,
            )
            .unwrap();
        assert!((end.y[0] - (-3.0f64).exp()).abs() < 1e-10);
        assert_eq!(end.t, 3.0);
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let solver = Dopri5::new(1e-12, 1e-14);
        let end = solver
            .integrate(
                |_, y: &[f64; 2]| [y[1], -y[0]],
                0.0,
                [0.0, 1.0],
                -2.0,
                |_, _| Flow::Continue,
            )
            .unwrap();
        assert!((end.y[0] - (-2.0f64).sin()).abs() < 1e-10);
        assert!((end.y[1] - (-2.0f64).cos()).abs() < 1e-10);
    }

    #[test]
    fn crossing_is_located_inside_step() {
        let solver = Dopri5::new(1e-12, 1e-14);
        let mut rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut prev = None;
        solver
            .integrate(rhs, 0.0, [1.0, 0.0], 10.0, |a, b| {
                if b.y[0] < 0.0 {
                    prev = Some((*a, *b));
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })
            .unwrap();
        let (a, b) = prev.unwrap();
        let hit = locate_crossing(&mut rhs, &a, &b, |p| p.y[0], 1e-13);
        assert!((hit.t - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }
}
