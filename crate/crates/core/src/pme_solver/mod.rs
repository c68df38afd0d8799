//! Explicit conservative finite differences for `u_t = (u^m)_xx + f(u)`.
//!
//! The scheme updates only the active part of the grid (the support plus
//! one node on either side), so long runs with slowly growing supports cost
//! in proportion to the support, not to the domain.

mod grid;
mod trace;

pub use grid::Grid;
pub use trace::{FrontTrace, TraceSample, TRACE_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::pow;
use crate::reaction::ReactionSpec;
use crate::stationary_profiles::QbProfile;

/// Values below this are treated as zero by front extraction.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
/// Negative values up to this fraction of `max u` are clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-14;
/// Positive values below this are flushed to zero so that the far
/// precursor never reaches subnormal arithmetic.
const FLUSH: f64 = 1e-150;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeftBoundary {
    /// Homogeneous Dirichlet at the left end (the default, full line).
    Zero,
    /// Value held fixed at node 0.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmeProblem {
    pub m: f64,
    pub reaction: Option<ReactionSpec>,
    pub left: LeftBoundary,
}

impl PmeProblem {
    /// Pure porous medium equation, `f ≡ 0`.
    pub fn pure(m: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::param("m", format!("{m} must exceed 1")));
        }
        Ok(PmeProblem {
            m,
            reaction: None,
            left: LeftBoundary::Zero,
        })
    }

    pub fn with_reaction(spec: ReactionSpec) -> Self {
        PmeProblem {
            m: spec.m,
            reaction: Some(spec),
            left: LeftBoundary::Zero,
        }
    }

    pub fn with_left(mut self, left: LeftBoundary) -> Self {
        self.left = left;
        self
    }

    fn lipschitz(&self) -> f64 {
        self.reaction.map_or(0.0, |r| r.lipschitz_k)
    }

    #[inline]
    fn reaction_at(&self, u: f64) -> f64 {
        match &self.reaction {
            Some(r) => r.f(u),
            None => 0.0,
        }
    }

    /// Largest stable explicit step for a state with maximum `u_max`.
    pub fn cfl_bound(&self, dx: f64, u_max: f64) -> f64 {
        let diff = 2.0 * self.m * u_max.max(0.0).powf(self.m - 1.0);
        dx * dx / (diff + dx * dx * self.lipschitz())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
}

impl State {
    /// Samples `u0` at the grid nodes and zeroes both endpoints.
    pub fn from_fn(grid: &Grid, t: f64, u0: impl Fn(f64) -> f64) -> State {
        let mut u: Vec<f64> = grid.xs().map(|x| u0(x).max(0.0)).collect();
        u[0] = 0.0;
        let n = u.len() - 1;
        u[n] = 0.0;
        State { t, u }
    }

    pub fn zeros(grid: &Grid, t: f64) -> State {
        State {
            t,
            u: vec![0.0; grid.nodes()],
        }
    }

    pub fn max(&self) -> f64 {
        self.u.iter().copied().fold(0.0, f64::max)
    }
}

#[inline]
fn pow_m(u: f64, m: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        pow(u, m)
    }
}

/// Advances nodes `lo..=hi` (interior only) by `dt` in place. Returns the
/// largest clamped negative magnitude.
fn kernel(
    u: &mut [f64],
    w: &mut [f64],
    lo: usize,
    hi: usize,
    lambda: f64,
    dt: f64,
    problem: &PmeProblem,
    t: f64,
) -> Result<f64> {
    let m = problem.m;
    let a = lo - 1;
    let b = hi + 1;
    for i in a..=b {
        w[i] = pow_m(u[i], m);
    }
    let mut u_max = 0.0f64;
    for i in lo..=hi {
        let lap = (w[i - 1] + w[i + 1]) - 2.0 * w[i];
        let ui = u[i];
        let v = ui + lambda * lap + dt * problem.reaction_at(ui);
        u[i] = v;
        u_max = u_max.max(v);
    }
    let tol = CLAMP_TOLERANCE * u_max;
    let mut clamped = 0.0f64;
    for v in &mut u[lo..=hi] {
        if *v < FLUSH {
            if *v < 0.0 {
                if -*v > tol {
                    return Err(Error::Instability {
                        t,
                        value: *v,
                        tolerance: tol,
                    });
                }
                clamped = clamped.max(-*v);
            }
            *v = 0.0;
        }
    }
    Ok(clamped)
}

fn apply_left(u: &mut [f64], left: LeftBoundary) {
    u[0] = match left {
        LeftBoundary::Zero => 0.0,
        LeftBoundary::Fixed(v) => v,
    };
}

/// One explicit step of size `dt` over the whole grid.
pub fn step(state: &State, problem: &PmeProblem, grid: &Grid, dt: f64) -> Result<State> {
    if state.u.len() != grid.nodes() {
        return Err(Error::param(
            "state",
            format!("{} values for {} nodes", state.u.len(), grid.nodes()),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("{dt} must be positive")));
    }
    let limit = problem.cfl_bound(grid.dx(), state.max());
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    let mut u = state.u.clone();
    apply_left(&mut u, problem.left);
    let n = grid.n();
    u[n] = 0.0;
    let mut w = vec![0.0; u.len()];
    let lambda = dt / (grid.dx() * grid.dx());
    kernel(&mut u, &mut w, 1, n - 1, lambda, dt, problem, state.t + dt)?;
    Ok(State { t: state.t + dt, u })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    Extinct,
    Interval { l: f64, r: f64 },
}

impl Support {
    pub fn bounds(self) -> Option<(f64, f64)> {
        match self {
            Support::Extinct => None,
            Support::Interval { l, r } => Some((l, r)),
        }
    }
}

/// Outermost crossings of the support threshold, linearly interpolated.
pub fn support_bounds(state: &State, grid: &Grid) -> Support {
    let u = &state.u;
    let tau = SUPPORT_THRESHOLD;
    let Some(i_r) = u.iter().rposition(|&v| v > tau) else {
        return Support::Extinct;
    };
    let i_l = u
        .iter()
        .position(|&v| v > tau)
        .expect("some value above threshold");
    let dx = grid.dx();
    let r = if i_r + 1 < u.len() {
        grid.x(i_r) + dx * (u[i_r] - tau) / (u[i_r] - u[i_r + 1])
    } else {
        grid.x(i_r)
    };
    let l = if i_l > 0 {
        grid.x(i_l) - dx * (u[i_l] - tau) / (u[i_l] - u[i_l - 1])
    } else {
        grid.x(0)
    };
    Support::Interval { l, r }
}

/// Position of the downward crossing of level `theta` on `x > 0`, if the
/// centre value exceeds `theta`.
pub fn level_set_theta(state: &State, grid: &Grid, theta: f64) -> Result<Option<f64>> {
    let c = grid.center_index();
    let u = &state.u;
    if u[c] <= theta {
        return Ok(None);
    }
    let mut crossings = 0;
    let mut first = None;
    for i in c..u.len() - 1 {
        let above = u[i] > theta;
        if above != (u[i + 1] > theta) {
            crossings += 1;
            if first.is_none() {
                first = Some(i);
            }
        }
    }
    if crossings > 1 {
        return Err(Error::MultipleCrossings { count: crossings });
    }
    let Some(i) = first else {
        // still above θ at the right end of the grid
        return Ok(Some(grid.x(u.len() - 1)));
    };
    Ok(Some(
        grid.x(i) + grid.dx() * (u[i] - theta) / (u[i] - u[i + 1]),
    ))
}

/// Pressure `v = m/(m−1) u^{m−1}`.
pub fn to_pressure(state: &State, m: f64) -> Vec<f64> {
    let c = m / (m - 1.0);
    state
        .u
        .iter()
        .map(|&u| if u > 0.0 { c * u.powf(m - 1.0) } else { 0.0 })
        .collect()
}

/// Trapezoidal `∫ u dx`.
pub fn mass(state: &State, grid: &Grid) -> f64 {
    let u = &state.u;
    let n = u.len() - 1;
    grid.dx() * (u.iter().sum::<f64>() - 0.5 * (u[0] + u[n]))
}

/// Front speed from the pressure gradient at the right front. The quadratic
/// through the last three nodes inside the support is differentiated at the
/// interpolated front position.
pub fn darcy_front_speed(state: &State, grid: &Grid, m: f64) -> Result<f64> {
    let Support::Interval { r, .. } = support_bounds(state, grid) else {
        return Err(Error::ThinFront { needed: 3 });
    };
    let i = state
        .u
        .iter()
        .rposition(|&v| v > SUPPORT_THRESHOLD)
        .expect("support exists");
    if i < 2 || state.u[i - 2] <= SUPPORT_THRESHOLD || state.u[i - 1] <= SUPPORT_THRESHOLD {
        return Err(Error::ThinFront { needed: 3 });
    }
    let c = m / (m - 1.0);
    let v = |k: usize| c * state.u[k].powf(m - 1.0);
    let (x0, x1, x2) = (grid.x(i - 2), grid.x(i - 1), grid.x(i));
    let (v0, v1, v2) = (v(i - 2), v(i - 1), v(i));
    let d01 = (v1 - v0) / (x1 - x0);
    let d12 = (v2 - v1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    let slope = d12 + curv * ((r - x1) + (r - x2));
    Ok(-slope)
}

/// Number of strict sign changes of `u − Q_b` over `x ∈ [0, max(r, L_b)]`.
/// Beyond the end of the grid `u` is zero.
pub fn sign_changes(state: &State, grid: &Grid, profile: &QbProfile) -> usize {
    const ZERO: f64 = 1e-14;
    let r = support_bounds(state, grid).bounds().map_or(0.0, |(_, r)| r);
    let x_end = r.max(profile.big_l());
    let mut last = 0i8;
    let mut changes = 0;
    let mut visit = |d: f64| {
        let s = if d > ZERO {
            1
        } else if d < -ZERO {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    };
    let c = grid.center_index();
    for i in c..grid.nodes() {
        let x = grid.x(i);
        if x > x_end {
            break;
        }
        visit(state.u[i] - profile.eval(x));
    }
    if x_end > grid.x_max() {
        visit(-profile.eval(grid.x_max() + grid.dx()));
    }
    changes
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub horizon: f64,
    pub sample_every: f64,
    pub safety: f64,
    /// Cells between the support and a domain end that trigger expansion.
    pub expand_margin: usize,
    pub keep_snapshots: bool,
}

impl EvolveOptions {
    pub fn new(horizon: f64, sample_every: f64) -> Self {
        EvolveOptions {
            horizon,
            sample_every,
            safety: 0.4,
            expand_margin: 10,
            keep_snapshots: false,
        }
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    pub fn with_safety(mut self, safety: f64) -> Self {
        self.safety = safety;
        self
    }
}

/// A state stored at a sample time, with the grid it lived on.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub grid: Grid,
    pub state: State,
}

impl Snapshot {
    /// Linear interpolation of the stored profile; zero outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let s = (x - g.x_min()) / g.dx();
        if !(s >= 0.0) || s > g.n() as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(g.n() - 1);
        let frac = s - i as f64;
        self.state.u[i] * (1.0 - frac) + self.state.u[i + 1] * frac
    }
}

/// Hook called at every sample; returning `false` stops the run early.
pub trait Observer {
    fn observe(&mut self, sample: &TraceSample, state: &State, grid: &Grid) -> bool;
}

impl<F: FnMut(&TraceSample, &State, &Grid) -> bool> Observer for F {
    fn observe(&mut self, sample: &TraceSample, state: &State, grid: &Grid) -> bool {
        self(sample, state, grid)
    }
}

struct Silent;

impl Observer for Silent {
    fn observe(&mut self, _: &TraceSample, _: &State, _: &Grid) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct RunStats {
    pub steps: u64,
    pub expansions: u32,
    /// Largest clamped negative value relative to `max u` at that step.
    pub max_clamp_ratio: f64,
}

/// A resumable run of the explicit scheme.
pub struct Evolution {
    problem: PmeProblem,
    grid: Grid,
    state: State,
    w: Vec<f64>,
    lo: usize,
    hi: usize,
    t0: f64,
    sample_every: f64,
    next_index: u64,
    safety: f64,
    expand_margin: usize,
    keep_snapshots: bool,
    guard: f64,
    trace: FrontTrace,
    snapshots: Vec<Snapshot>,
    stats: RunStats,
    stopped: bool,
}

impl Evolution {
    pub fn new(
        u0: State,
        problem: PmeProblem,
        grid: Grid,
        opts: &EvolveOptions,
    ) -> Result<Evolution> {
        if u0.u.len() != grid.nodes() {
            return Err(Error::param(
                "u0",
                format!("{} values for {} nodes", u0.u.len(), grid.nodes()),
            ));
        }
        if u0.u.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("u0", "values must be finite and nonnegative"));
        }
        if !(opts.sample_every > 0.0) {
            return Err(Error::param("sample_every", "must be positive"));
        }
        if !(opts.safety > 0.0 && opts.safety <= 1.0) {
            return Err(Error::param("safety", "must lie in (0, 1]"));
        }
        let mut state = u0;
        apply_left(&mut state.u, problem.left);
        let n = grid.n();
        if state.u[n] != 0.0 || (problem.left == LeftBoundary::Zero && state.u[0] != 0.0) {
            return Err(Error::param(
                "u0",
                "initial datum must vanish at the domain ends",
            ));
        }
        let guard = 10.0 * state.max().max(1.0);
        let w = vec![0.0; state.u.len()];
        let t0 = state.t;
        let mut ev = Evolution {
            problem,
            grid,
            state,
            w,
            lo: 1,
            hi: n - 1,
            t0,
            sample_every: opts.sample_every,
            next_index: 0,
            safety: opts.safety,
            expand_margin: opts.expand_margin.max(2),
            keep_snapshots: opts.keep_snapshots,
            guard,
            trace: FrontTrace {
                samples: Vec::new(),
                reaction: problem.reaction.map(|r| r.params()),
                m: problem.m,
                grid: Some(grid),
                theta_anomalies: 0,
            },
            snapshots: Vec::new(),
            stats: RunStats::default(),
            stopped: false,
        };
        ev.refresh_active();
        ev.expand_if_needed();
        Ok(ev)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn trace(&self) -> &FrontTrace {
        &self.trace
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    /// True once an observer asked to stop.
    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn into_parts(self) -> (FrontTrace, Vec<Snapshot>, State, Grid) {
        let mut trace = self.trace;
        trace.grid = Some(self.grid);
        (trace, self.snapshots, self.state, self.grid)
    }

    fn refresh_active(&mut self) {
        let u = &self.state.u;
        let n = self.grid.n();
        let first = u.iter().position(|&v| v > 0.0);
        let last = u.iter().rposition(|&v| v > 0.0);
        match (first, last) {
            (Some(a), Some(b)) => {
                self.lo = a.max(1);
                self.hi = b.min(n - 1).max(self.lo);
            }
            _ => {
                self.lo = 1;
                self.hi = 1;
            }
        }
    }

    fn expand_if_needed(&mut self) {
        loop {
            let n = self.grid.n();
            let margin = self.expand_margin;
            let left_close = self.problem.left == LeftBoundary::Zero
                && self.state.u[..=margin.min(n)].iter().any(|&v| v > 0.0);
            let right_close = self.state.u[n.saturating_sub(margin)..]
                .iter()
                .any(|&v| v > 0.0);
            if !left_close && !right_close {
                return;
            }
            let (add_l, add_r) = match (left_close, right_close) {
                (true, true) => (n / 2, n / 2),
                (true, false) => (n, 0),
                _ => (0, n),
            };
            let grid = self.grid.extended(add_l, add_r);
            let mut u = vec![0.0; grid.nodes()];
            u[add_l..add_l + n + 1].copy_from_slice(&self.state.u);
            self.state.u = u;
            self.w = vec![0.0; grid.nodes()];
            self.grid = grid;
            self.lo += add_l;
            self.hi += add_l;
            self.stats.expansions += 1;
        }
    }

    fn record(&mut self, observer: &mut dyn Observer) -> Result<()> {
        let state = &self.state;
        let grid = &self.grid;
        let support = support_bounds(state, grid);
        let (l, r) = support
            .bounds()
            .map_or((None, None), |(l, r)| (Some(l), Some(r)));
        let theta_pos = match self.problem.reaction {
            Some(spec) => match level_set_theta(state, grid, spec.theta) {
                Ok(v) => v,
                Err(_) => {
                    self.trace.theta_anomalies += 1;
                    None
                }
            },
            None => None,
        };
        let sample = TraceSample {
            t: state.t,
            l,
            r,
            theta_pos,
            u_center: state.u[grid.center_index()],
            mass: mass(state, grid),
            u_max: state.u[self.lo - 1..=self.hi + 1]
                .iter()
                .copied()
                .fold(0.0, f64::max),
        };
        self.trace.samples.push(sample);
        if self.keep_snapshots {
            self.snapshots.push(Snapshot {
                grid: *grid,
                state: state.clone(),
            });
        }
        if !observer.observe(&sample, state, grid) {
            self.stopped = true;
        }
        Ok(())
    }

    fn sample_time(&self, k: u64) -> f64 {
        self.t0 + k as f64 * self.sample_every
    }

    /// Runs until `t_end` (or until the observer stops the run).
    pub fn advance_to(&mut self, t_end: f64, observer: &mut dyn Observer) -> Result<()> {
        let dx = self.grid.dx();
        let dx2 = dx * dx;
        if self.next_index == 0 {
            self.record(observer)?;
            self.next_index = 1;
        }
        while !self.stopped {
            let target = self.sample_time(self.next_index);
            if target > t_end * (1.0 + 1e-14) + 1e-300 {
                break;
            }
            let u_max = self.state.u[self.lo - 1..=self.hi + 1]
                .iter()
                .copied()
                .fold(0.0, f64::max);
            if u_max > self.guard {
                return Err(Error::BlowUpGuard {
                    t: self.state.t,
                    u_max,
                });
            }
            let mut dt = self.safety * self.problem.cfl_bound(dx, u_max);
            let remaining = target - self.state.t;
            let hits = dt >= remaining;
            if hits {
                dt = remaining;
            }
            let lo = (self.lo.max(2) - 1).max(1);
            let hi = (self.hi + 1).min(self.grid.n() - 1);
            let t_new = if hits { target } else { self.state.t + dt };
            let clamped = kernel(
                &mut self.state.u,
                &mut self.w,
                lo,
                hi,
                dt / dx2,
                dt,
                &self.problem,
                t_new,
            )?;
            if clamped > 0.0 && u_max > 0.0 {
                self.stats.max_clamp_ratio = self.stats.max_clamp_ratio.max(clamped / u_max);
            }
            self.state.t = t_new;
            self.stats.steps += 1;
            // new active range
            let u = &self.state.u;
            let mut a = lo;
            while a <= hi && u[a] == 0.0 {
                a += 1;
            }
            if a > hi {
                self.lo = 1;
                self.hi = 1;
            } else {
                let mut b = hi;
                while u[b] == 0.0 {
                    b -= 1;
                }
                self.lo = a;
                self.hi = b;
            }
            if self.problem.left != LeftBoundary::Zero {
                self.lo = 1;
            }
            self.expand_if_needed();
            if hits {
                self.record(observer)?;
                self.next_index += 1;
            }
        }
        Ok(())
    }
}

/// Runs `u0` to `opts.horizon` and returns the trace.
pub fn evolve(
    u0: State,
    problem: &PmeProblem,
    grid: &Grid,
    opts: &EvolveOptions,
) -> Result<FrontTrace> {
    let mut ev = Evolution::new(u0, *problem, *grid, opts)?;
    let t_end = ev.state().t + opts.horizon;
    ev.advance_to(t_end, &mut Silent)?;
    Ok(ev.into_parts().0)
}

/// Like [`evolve`] but returns the stored snapshots as well, and lets an
/// observer stop the run early.
pub fn evolve_observed(
    u0: State,
    problem: &PmeProblem,
    grid: &Grid,
    opts: &EvolveOptions,
    observer: &mut dyn Observer,
) -> Result<(FrontTrace, Vec<Snapshot>, RunStats)> {
    let mut ev = Evolution::new(u0, *problem, *grid, opts)?;
    let t_end = ev.state().t + opts.horizon;
    ev.advance_to(t_end, observer)?;
    let stats = ev.stats();
    let (trace, snaps, _, _) = ev.into_parts();
    Ok((trace, snaps, stats))
}
