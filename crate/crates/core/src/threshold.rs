//! Vanishing / spreading classification and bisection for the critical
//! multiplier `λ*` of a datum `λψ`.
//!
//! Vanishing is certified by `max u < θ`: below the ignition level the
//! reaction is off and the solution decays by pure diffusion. Spreading is
//! certified by `u ≥ Q_b` on the support of a stationary bump `Q_b`; the
//! bump extended by zero is a stationary subsolution, so the solution stays
//! above `θ + b` at the origin forever, which rules out both vanishing and
//! convergence to `θ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pme_solver::{
    Evolution, EvolveOptions, FrontTrace, Grid, Observer, PmeProblem, State, TraceSample,
};
use crate::reaction::{ReactionParams, ReactionSpec};
use crate::stationary_profiles::{bump_profile, L_of_b, QbProfile};

/// `max u < θ − VANISHING_MARGIN` certifies vanishing.
pub const VANISHING_MARGIN: f64 = 1e-10;
/// Seeding gives up after this many doublings or halvings.
pub const MAX_SEEDING: usize = 60;
/// Undecided probes are re-run once to this multiple of the horizon.
pub const EXTENSION: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Vanishing,
    Spreading,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Which criterion fired.
    pub certificate: String,
    /// False for the dwell heuristic and for undecided runs.
    pub rigorous: bool,
    pub fired_at: Option<f64>,
    pub horizon_used: f64,
}

impl Verdict {
    fn undecided(horizon_used: f64) -> Verdict {
        Verdict {
            kind: VerdictKind::Undecided,
            certificate: "no criterion fired".into(),
            rigorous: false,
            fired_at: None,
            horizon_used,
        }
    }
}

/// Trace-only classification. Vanishing uses the rigorous sup-bound;
/// spreading uses the dwell heuristic: `u(0,t) ≥ θ + σ` throughout the
/// trailing `dwell` window and the right front advancing by at least
/// `L(σ/2)` across it.
pub fn classify(trace: &FrontTrace, spec: &ReactionSpec, dwell: f64) -> Verdict {
    let Some(last) = trace.last() else {
        return Verdict::undecided(0.0);
    };
    let t0 = trace.samples[0].t;
    let horizon = last.t - t0;
    if let Some(s) = trace
        .samples
        .iter()
        .find(|s| s.u_max < spec.theta - VANISHING_MARGIN)
    {
        return Verdict {
            kind: VerdictKind::Vanishing,
            certificate: format!("max u = {} < theta", s.u_max),
            rigorous: true,
            fired_at: Some(s.t),
            horizon_used: horizon,
        };
    }
    let start = trace.samples.partition_point(|s| s.t < last.t - dwell);
    let window = &trace.samples[start..];
    let hot = window.len() >= 2 && window.iter().all(|s| s.u_center >= spec.theta + spec.sigma);
    if hot {
        let advance = match (window[0].r, last.r) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        if let Ok(w) = L_of_b(spec, 0.5 * spec.sigma) {
            if advance >= w.big_l {
                return Verdict {
                    kind: VerdictKind::Spreading,
                    certificate: format!(
                        "heuristic: front advanced {advance} >= L(sigma/2) = {} over dwell {dwell}",
                        w.big_l
                    ),
                    rigorous: false,
                    fired_at: Some(last.t),
                    horizon_used: horizon,
                };
            }
        }
    }
    Verdict::undecided(horizon)
}

/// Observer that stops a run as soon as either certificate fires.
#[derive(Clone, Debug)]
pub struct Certifier {
    theta: f64,
    ladder: Vec<QbProfile>,
    t0: Option<f64>,
    pub verdict: Option<Verdict>,
}

impl Certifier {
    /// Builds the ladder of comparison bumps, tallest first.
    pub fn new(spec: &ReactionSpec) -> Result<Certifier> {
        let room = 1.0 - spec.theta;
        let mut bs: Vec<f64> = [0.95, 0.9, 0.8, 0.7, 0.5, 0.3, 0.2, 0.1]
            .iter()
            .map(|f| f * room)
            .collect();
        bs.extend([spec.sigma, 0.5 * spec.sigma]);
        bs.sort_by(|a, b| b.total_cmp(a));
        bs.dedup();
        let ladder: Vec<QbProfile> = bs
            .into_iter()
            .filter_map(|b| bump_profile(spec, b).ok())
            .collect();
        if ladder.is_empty() {
            return Err(Error::NoRoot(
                "no stationary bump available for the spreading certificate".into(),
            ));
        }
        Ok(Certifier {
            theta: spec.theta,
            ladder,
            t0: None,
            verdict: None,
        })
    }

    pub fn ladder(&self) -> &[QbProfile] {
        &self.ladder
    }

    /// Forgets any verdict so the certifier can watch another run.
    pub fn reset(&mut self) {
        self.verdict = None;
        self.t0 = None;
    }

    fn dominates(state: &State, grid: &Grid, q: &QbProfile) -> bool {
        let big_l = q.big_l();
        if grid.x_min() > -big_l || grid.x_max() < big_l {
            return false;
        }
        let dx = grid.dx();
        let first = ((-big_l - grid.x_min()) / dx).floor().max(0.0) as usize;
        let last = (((big_l - grid.x_min()) / dx).ceil() as usize).min(grid.n());
        (first..=last).all(|i| state.u[i] >= q.eval(grid.x(i)))
    }
}

impl Observer for Certifier {
    fn observe(&mut self, sample: &TraceSample, state: &State, grid: &Grid) -> bool {
        let t0 = *self.t0.get_or_insert(sample.t);
        if self.verdict.is_some() {
            return false;
        }
        if sample.u_max < self.theta - VANISHING_MARGIN {
            self.verdict = Some(Verdict {
                kind: VerdictKind::Vanishing,
                certificate: format!("max u = {} < theta", sample.u_max),
                rigorous: true,
                fired_at: Some(sample.t),
                horizon_used: sample.t - t0,
            });
            return false;
        }
        for q in &self.ladder {
            if sample.u_max < self.theta + q.b {
                continue;
            }
            if Certifier::dominates(state, grid, q) {
                self.verdict = Some(Verdict {
                    kind: VerdictKind::Spreading,
                    certificate: format!("u >= Q_b on its support, b = {}", q.b),
                    rigorous: true,
                    fired_at: Some(sample.t),
                    horizon_used: sample.t - t0,
                });
                return false;
            }
        }
        true
    }
}

/// Symmetric single-bump data shapes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Psi {
    /// `height·(1 − 2|x|/width)₊`.
    Tent { width: f64, height: f64 },
    /// `height` on `|x| < width/2`.
    Box { width: f64, height: f64 },
}

impl Psi {
    pub fn validate(&self) -> Result<()> {
        let (Psi::Tent { width, height } | Psi::Box { width, height }) = *self;
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param("width", format!("{width} must be positive")));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::param("height", format!("{height} must be positive")));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Psi::Tent { width, height } => height * (1.0 - 2.0 * x.abs() / width).max(0.0),
            Psi::Box { width, height } => {
                if x.abs() < 0.5 * width {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    pub fn half_width(&self) -> f64 {
        let (Psi::Tent { width, .. } | Psi::Box { width, .. }) = *self;
        0.5 * width
    }

    pub fn label(&self) -> String {
        match *self {
            Psi::Tent { width, height } => format!("tent(width={width}, height={height})"),
            Psi::Box { width, height } => format!("box(width={width}, height={height})"),
        }
    }
}

/// Everything a probe run needs apart from `λ`.
#[derive(Clone, Copy, Debug)]
pub struct ProbeSetup {
    pub spec: ReactionSpec,
    pub psi: Psi,
    /// Initial half-width of the grid; it grows with the support.
    pub x_max: f64,
    pub n: usize,
    pub horizon: f64,
    pub sample_every: f64,
    pub safety: f64,
}

impl ProbeSetup {
    pub fn grid(&self) -> Result<Grid> {
        if !(self.x_max > self.psi.half_width()) {
            return Err(Error::param(
                "x_max",
                format!("{} does not contain the datum", self.x_max),
            ));
        }
        Grid::symmetric(self.x_max, self.n)
    }

    pub fn options(&self) -> EvolveOptions {
        EvolveOptions::new(self.horizon, self.sample_every).with_safety(self.safety)
    }

    pub fn initial_state(&self, lambda: f64) -> Result<(State, Grid)> {
        let grid = self.grid()?;
        Ok((
            State::from_fn(&grid, 0.0, |x| lambda * self.psi.eval(x)),
            grid,
        ))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRecord {
    pub lambda: f64,
    pub verdict: Verdict,
    /// Side the probe counts for in the bisection; differs from the verdict
    /// only for undecided probes resolved by the tie-break.
    pub side: VerdictKind,
    pub tie_break: bool,
    pub extended: bool,
    pub u_max_end: f64,
}

/// Runs `λψ` to the horizon, once more to `4×` the horizon if undecided,
/// then applies the tie-break `max u < θ + σ/2 ⇒ vanishing side`.
pub fn probe(
    setup: &ProbeSetup,
    certifier: &mut Certifier,
    lambda: f64,
) -> Result<(ProbeRecord, FrontTrace)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(
            "lambda",
            format!("{lambda} must be finite and nonnegative"),
        ));
    }
    certifier.reset();
    let (u0, grid) = setup.initial_state(lambda)?;
    let problem = PmeProblem::with_reaction(setup.spec);
    let mut ev = Evolution::new(u0, problem, grid, &setup.options())?;
    ev.advance_to(setup.horizon, certifier)?;
    let mut extended = false;
    if certifier.verdict.is_none() {
        extended = true;
        ev.advance_to(EXTENSION * setup.horizon, certifier)?;
    }
    let u_max_end = ev.trace().last().map_or(0.0, |s| s.u_max);
    let (verdict, side, tie_break) = match certifier.verdict.take() {
        Some(v) => {
            let k = v.kind;
            (v, k, false)
        }
        None => {
            let side = if u_max_end < setup.spec.theta + 0.5 * setup.spec.sigma {
                VerdictKind::Vanishing
            } else {
                VerdictKind::Spreading
            };
            (Verdict::undecided(EXTENSION * setup.horizon), side, true)
        }
    };
    let trace = ev.into_parts().0;
    Ok((
        ProbeRecord {
            lambda,
            verdict,
            side,
            tie_break,
            extended,
            u_max_end,
        },
        trace,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalBracket {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub probes: Vec<ProbeRecord>,
    pub psi: Psi,
    pub spec: ReactionParams,
    pub horizon: f64,
    pub tol: f64,
    /// Bracket right after seeding, before bisection.
    pub seed_lo: f64,
    pub seed_hi: f64,
    /// Set when any probe was assigned by the tie-break rather than a
    /// certificate.
    pub tie_broken: bool,
}

impl CriticalBracket {
    pub fn iterations(&self) -> usize {
        self.probes.len()
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lambda_lo + self.lambda_hi)
    }

    pub fn relative_width(&self) -> f64 {
        (self.lambda_hi - self.lambda_lo) / self.lambda_hi
    }

    /// No probe counted as spreading lies at or below a probe counted as
    /// vanishing.
    pub fn is_monotone(&self) -> bool {
        let max_vanishing = self
            .probes
            .iter()
            .filter(|p| p.side == VerdictKind::Vanishing)
            .map(|p| p.lambda)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_spreading = self
            .probes
            .iter()
            .filter(|p| p.side == VerdictKind::Spreading)
            .map(|p| p.lambda)
            .fold(f64::INFINITY, f64::min);
        max_vanishing < min_spreading
    }
}

pub fn bisect_lambda(setup: &ProbeSetup, tol: f64) -> Result<CriticalBracket> {
    bisect_lambda_with(setup, tol, &mut |_, _| {})
}

/// Seeds a bracket by doubling/halving from `λ = 1`, then bisects until
/// the relative width is at most `tol`. `on_probe` sees every probe and its
/// trace as it completes.
pub fn bisect_lambda_with(
    setup: &ProbeSetup,
    tol: f64,
    on_probe: &mut dyn FnMut(&ProbeRecord, &FrontTrace),
) -> Result<CriticalBracket> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::param("tol", format!("{tol} must lie in (0, 1)")));
    }
    setup.psi.validate()?;
    let mut certifier = Certifier::new(&setup.spec)?;
    let mut probes = Vec::new();
    let mut run = |lambda: f64, probes: &mut Vec<ProbeRecord>| -> Result<VerdictKind> {
        let (rec, trace) = probe(setup, &mut certifier, lambda)?;
        on_probe(&rec, &trace);
        let side = rec.side;
        probes.push(rec);
        Ok(side)
    };

    let mut lambda = 1.0;
    let first = run(lambda, &mut probes)?;
    let (mut lo, mut hi);
    if first == VerdictKind::Spreading {
        hi = lambda;
        let mut found = None;
        for _ in 0..MAX_SEEDING {
            lambda *= 0.5;
            if run(lambda, &mut probes)? == VerdictKind::Vanishing {
                found = Some(lambda);
                break;
            }
            hi = lambda;
        }
        lo = found.ok_or(Error::BracketSeeding(MAX_SEEDING))?;
    } else {
        lo = lambda;
        let mut found = None;
        for _ in 0..MAX_SEEDING {
            lambda *= 2.0;
            if run(lambda, &mut probes)? == VerdictKind::Spreading {
                found = Some(lambda);
                break;
            }
            lo = lambda;
        }
        hi = found.ok_or(Error::BracketSeeding(MAX_SEEDING))?;
    }

    let (seed_lo, seed_hi) = (lo, hi);
    while (hi - lo) > tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match run(mid, &mut probes)? {
            VerdictKind::Vanishing => lo = mid,
            _ => hi = mid,
        }
    }
    let tie_broken = probes.iter().any(|p| p.tie_break);
    Ok(CriticalBracket {
        lambda_lo: lo,
        lambda_hi: hi,
        probes,
        psi: setup.psi,
        spec: setup.spec.params(),
        horizon: setup.horizon,
        tol,
        seed_lo,
        seed_hi,
        tie_broken,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

#[derive(Clone, Debug)]
pub struct NearCriticalRun {
    pub side: Side,
    pub lambda: f64,
    pub trace: FrontTrace,
    /// Set if a certificate fired (after the first 10% of the horizon);
    /// the trace ends there.
    pub verdict: Option<Verdict>,
}

/// Runs `λ = λ_mid(1 ± offset)` to `horizon`, stopping early if a
/// certificate fires. `extra` observes every sample as well.
pub fn near_critical_run(
    bracket: &CriticalBracket,
    setup: &ProbeSetup,
    side: Side,
    offset: f64,
    horizon: f64,
    extra: &mut dyn Observer,
) -> Result<NearCriticalRun> {
    if !(offset > 0.0 && offset < 1.0) {
        return Err(Error::param(
            "offset",
            format!("{offset} must lie in (0, 1)"),
        ));
    }
    if bracket.relative_width() > offset / 10.0 {
        return Err(Error::param(
            "offset",
            format!(
                "bracket relative width {} exceeds offset/10 = {}",
                bracket.relative_width(),
                offset / 10.0
            ),
        ));
    }
    let lambda = match side {
        Side::Above => bracket.mid() * (1.0 + offset),
        Side::Below => bracket.mid() * (1.0 - offset),
    };
    let mut certifier = Certifier::new(&setup.spec)?;
    let (u0, grid) = setup.initial_state(lambda)?;
    let problem = PmeProblem::with_reaction(setup.spec);
    let opts = EvolveOptions::new(horizon, setup.sample_every).with_safety(setup.safety);
    let mut ev = Evolution::new(u0, problem, grid, &opts)?;
    let mut both = Both(&mut certifier, extra);
    ev.advance_to(horizon, &mut both)?;
    let verdict = certifier.verdict.take();
    if let Some(t) = verdict.as_ref().and_then(|v| v.fired_at) {
        if t < 0.1 * horizon {
            return Err(Error::OffsetTooLarge { t, horizon });
        }
    }
    Ok(NearCriticalRun {
        side,
        lambda,
        trace: ev.into_parts().0,
        verdict,
    })
}

struct Both<'a, 'b>(&'a mut Certifier, &'b mut dyn Observer);

impl Observer for Both<'_, '_> {
    fn observe(&mut self, sample: &TraceSample, state: &State, grid: &Grid) -> bool {
        let keep = self.0.observe(sample, state, grid);
        let extra = self.1.observe(sample, state, grid);
        keep && extra
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ReactionSpec {
        ReactionSpec::new(0.3, 0.02, 4.0, 2.0).unwrap()
    }

    fn trace_with(u: &[f64], r: &[f64]) -> FrontTrace {
        let ts: Vec<f64> = (0..u.len()).map(|i| i as f64).collect();
        let mut tr = FrontTrace::from_fronts(&ts, r);
        for (s, &v) in tr.samples.iter_mut().zip(u) {
            s.u_center = v;
            s.u_max = v;
        }
        tr
    }

    #[test]
    fn trace_classification() {
        let spec = spec();
        let v = classify(&trace_with(&[0.5, 0.4, 0.15], &[1.0, 1.0, 1.0]), &spec, 1.0);
        assert_eq!(v.kind, VerdictKind::Vanishing);
        assert!(v.rigorous);
        let flat = classify(&trace_with(&[0.3; 20], &[1.0; 20]), &spec, 2.0);
        assert_eq!(flat.kind, VerdictKind::Undecided);
        let big_l = L_of_b(&spec, 0.01).unwrap().big_l;
        let rs: Vec<f64> = (0..20).map(|i| 1.0 + i as f64 * big_l).collect();
        let hot = classify(&trace_with(&[0.95; 20], &rs), &spec, 2.0);
        assert_eq!(hot.kind, VerdictKind::Spreading);
        assert!(!hot.rigorous);
    }

    #[test]
    fn psi_shapes() {
        let tent = Psi::Tent {
            width: 2.0,
            height: 1.0,
        };
        assert_eq!(tent.eval(0.0), 1.0);
        assert_eq!(tent.eval(0.5), 0.5);
        assert_eq!(tent.eval(-1.5), 0.0);
        let bx = Psi::Box {
            width: 2.0,
            height: 0.7,
        };
        assert_eq!(bx.eval(0.99), 0.7);
        assert_eq!(bx.eval(1.0), 0.0);
        assert!(Psi::Tent {
            width: -1.0,
            height: 1.0
        }
        .validate()
        .is_err());
    }

    fn setup() -> ProbeSetup {
        ProbeSetup {
            spec: spec(),
            psi: Psi::Tent {
                width: 2.0,
                height: 1.0,
            },
            x_max: 2.0,
            n: 80,
            horizon: 20.0,
            sample_every: 0.25,
            safety: 0.4,
        }
    }

    #[test]
    fn zero_datum_vanishes_at_once() {
        let s = setup();
        let mut c = Certifier::new(&s.spec).unwrap();
        let (rec, _) = probe(&s, &mut c, 0.0).unwrap();
        assert_eq!(rec.verdict.kind, VerdictKind::Vanishing);
        assert_eq!(rec.verdict.fired_at, Some(0.0));
    }

    #[test]
    fn large_datum_spreads_and_small_vanishes() {
        let s = setup();
        let mut c = Certifier::new(&s.spec).unwrap();
        let (big, trace) = probe(&s, &mut c, 30.0).unwrap();
        assert_eq!(big.verdict.kind, VerdictKind::Spreading);
        assert!(trace.last().unwrap().u_center > 0.9);
        let (small, _) = probe(&s, &mut c, 0.2).unwrap();
        assert_eq!(small.verdict.kind, VerdictKind::Vanishing);
    }

    #[test]
    fn vanishing_certificate_is_sound() {
        // once max u < θ, max u never increases again
        let s = setup();
        let (u0, grid) = s.initial_state(0.35).unwrap();
        let mut ev =
            Evolution::new(u0, PmeProblem::with_reaction(s.spec), grid, &s.options()).unwrap();
        let mut fired = None;
        let mut last_max = f64::INFINITY;
        let mut watch = |smp: &TraceSample, _: &State, _: &Grid| {
            if fired.is_some() {
                assert!(smp.u_max <= last_max);
            } else if smp.u_max < 0.3 - VANISHING_MARGIN {
                fired = Some(smp.t);
            }
            last_max = smp.u_max;
            true
        };
        ev.advance_to(20.0, &mut watch).unwrap();
        assert!(fired.is_some());
    }

    #[test]
    fn coarse_bisection_is_monotone_and_halves() {
        let s = setup();
        let b = bisect_lambda(&s, 1e-2).unwrap();
        assert!(b.lambda_lo < b.lambda_hi);
        assert!(b.relative_width() <= 1e-2);
        assert!(b.is_monotone());
        let bisections = b
            .probes
            .iter()
            .filter(|p| p.lambda > b.seed_lo && p.lambda < b.seed_hi)
            .count();
        let expected = (b.seed_hi - b.seed_lo) / 2f64.powi(bisections as i32);
        assert!((expected - (b.lambda_hi - b.lambda_lo)).abs() <= 1e-12 * b.lambda_hi);
        let err = near_critical_run(
            &b,
            &s,
            Side::Above,
            0.5,
            400.0,
            &mut |_: &TraceSample, _: &State, _: &Grid| true,
        );
        assert!(matches!(err, Err(Error::OffsetTooLarge { .. })), "{err:?}");
    }
}
