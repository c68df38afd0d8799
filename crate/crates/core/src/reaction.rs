//! Combustion-type reaction terms.
//!
//! `f` vanishes on the ignition dead zone `[0, θ]`, equals `(x − θ)^p` on
//! `[θ, θ + σ]`, is blended to zero at `x = 1` by a cubic Hermite factor and
//! continues linearly (negative) beyond 1 so that it stays `C¹`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::pow;

fn default_u_cap() -> f64 {
    2.0
}

/// Parameters of the reaction as they appear in a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionParams {
    pub theta: f64,
    pub sigma: f64,
    pub p: f64,
    pub m: f64,
    #[serde(default = "default_u_cap")]
    pub u_cap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionSpec {
    pub theta: f64,
    pub sigma: f64,
    pub p: f64,
    pub m: f64,
    pub u_cap: f64,
    /// Maximum of `|f'|` sampled on `[0, u_cap]`.
    pub lipschitz_k: f64,
    tail_slope: f64,
}

impl ReactionSpec {
    /// Builds the reaction, rejecting parameters that break the hard structure
    /// (`0 < θ < θ + σ < 1`, `p > 1`, `m > 1`). The σ-constraint is only
    /// reported by [`validate`].
    pub fn new(theta: f64, sigma: f64, p: f64, m: f64) -> Result<Self> {
        Self::with_cap(theta, sigma, p, m, default_u_cap())
    }

    pub fn with_cap(theta: f64, sigma: f64, p: f64, m: f64, u_cap: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::param("theta", format!("{theta} not in (0,1)")));
        }
        if !(sigma > 0.0 && theta + sigma < 1.0) {
            return Err(Error::param(
                "sigma",
                format!("need 0 < sigma and theta+sigma<1, got sigma = {sigma}"),
            ));
        }
        if !(p > 1.0) {
            return Err(Error::param("p", format!("{p} must exceed 1")));
        }
        if !(m > 1.0) {
            return Err(Error::param("m", format!("{m} must exceed 1")));
        }
        if !(u_cap >= 1.0) {
            return Err(Error::param("u_cap", format!("{u_cap} must be at least 1")));
        }
        Ok(Self::unchecked(theta, sigma, p, m, u_cap))
    }

    /// No validation at all; used by [`validate`] so that it can report on
    /// arbitrary parameter sets.
    pub fn unchecked(theta: f64, sigma: f64, p: f64, m: f64, u_cap: f64) -> Self {
        let w = 1.0 - theta - sigma;
        let tail_slope = if w > 0.0 {
            pow(1.0 - theta, p) / w
        } else {
            0.0
        };
        let mut spec = ReactionSpec {
            theta,
            sigma,
            p,
            m,
            u_cap,
            lipschitz_k: 0.0,
            tail_slope,
        };
        spec.lipschitz_k = spec.sample_lipschitz();
        spec
    }

    pub fn from_params(params: &ReactionParams) -> Result<Self> {
        Self::with_cap(params.theta, params.sigma, params.p, params.m, params.u_cap)
    }

    pub fn params(&self) -> ReactionParams {
        ReactionParams {
            theta: self.theta,
            sigma: self.sigma,
            p: self.p,
            m: self.m,
            u_cap: self.u_cap,
        }
    }

    /// Pressure level `Θ = m/(m−1) θ^{m−1}` of the ignition temperature.
    pub fn pressure_level(&self) -> f64 {
        self.m / (self.m - 1.0) * self.theta.powf(self.m - 1.0)
    }

    /// `|f'(1)|`, the slope of the linear tail.
    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// Reaction value; no argument check.
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        if x <= self.theta {
            return 0.0;
        }
        let top = self.theta + self.sigma;
        if x <= top {
            return pow(x - self.theta, self.p);
        }
        if x <= 1.0 {
            let s = (x - top) / (1.0 - top);
            let h = 1.0 - 2.0 * s * s + s * s * s;
            return pow(x - self.theta, self.p) * h;
        }
        -self.tail_slope * (x - 1.0)
    }

    /// Derivative `f'(x)`.
    pub fn df(&self, x: f64) -> f64 {
        if x <= self.theta {
            return 0.0;
        }
        let d = x - self.theta;
        let top = self.theta + self.sigma;
        if x <= top {
            return self.p * pow(d, self.p - 1.0);
        }
        if x <= 1.0 {
            let w = 1.0 - top;
            let s = (x - top) / w;
            let h = 1.0 - 2.0 * s * s + s * s * s;
            let dh = (-4.0 * s + 3.0 * s * s) / w;
            return self.p * pow(d, self.p - 1.0) * h + pow(d, self.p) * dh;
        }
        -self.tail_slope
    }

    fn sample_lipschitz(&self) -> f64 {
        const N: usize = 10_000;
        (0..=N)
            .map(|i| self.df(self.u_cap * i as f64 / N as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// `f(x)` for `x ≥ 0`.
pub fn eval_f(spec: &ReactionSpec, x: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::NegativeArgument(x));
    }
    Ok(spec.f(x))
}

/// The reaction seen by the pressure `v = m/(m−1) u^{m−1}`:
/// `g(v) = m u^{m−2} f(u)`.
pub fn eval_g(spec: &ReactionSpec, v: f64) -> Result<f64> {
    if v < 0.0 || v.is_nan() {
        return Err(Error::NegativeArgument(v));
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    let m = spec.m;
    let u = ((m - 1.0) * v / m).powf(1.0 / (m - 1.0));
    let f = spec.f(u);
    if f == 0.0 {
        return Ok(0.0);
    }
    Ok(m * u.powf(m - 2.0) * f)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub condition: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub lipschitz_k: f64,
    /// `(θ+σ)^m − θ^m`
    pub sigma_lhs: f64,
    /// `θ^m m(p−1)/(p(m−1))`
    pub sigma_rhs: f64,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn sigma_constraint_ok(&self) -> bool {
        !self
            .violations
            .iter()
            .any(|v| v.condition == SIGMA_CONSTRAINT)
    }

    pub fn violates(&self, condition: &str) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }
}

pub const SIGMA_CONSTRAINT: &str = "sigma-constraint";

/// Checks the structural conditions on `f` by dense sampling. Never fails;
/// everything found wrong is listed in the report.
pub fn validate(spec: &ReactionSpec) -> ValidationReport {
    let ReactionSpec {
        theta,
        sigma,
        p,
        m,
        u_cap,
        ..
    } = *spec;
    let mut out = Vec::new();
    let mut fail =
        |condition: &'static str, detail: String| out.push(Violation { condition, detail });

    if !(theta > 0.0 && theta < 1.0) {
        fail("theta in (0,1)", format!("theta = {theta}"));
    }
    if !(sigma > 0.0) {
        fail("sigma>0", format!("sigma = {sigma}"));
    }
    let structured = theta + sigma < 1.0;
    if !structured {
        fail("theta+sigma<1", format!("theta+sigma = {}", theta + sigma));
    }
    if !(p > 1.0) {
        fail("p>1", format!("p = {p}"));
    }
    if !(m > 1.0) {
        fail("m>1", format!("m = {m}"));
    }

    const N: usize = 2000;
    let interior = |a: f64, b: f64| (1..N).map(move |i| a + (b - a) * i as f64 / N as f64);
    if theta > 0.0 && theta < 1.0 && sigma > 0.0 && p > 1.0 {
        if let Some(x) = interior(0.0, theta)
            .chain([0.0, theta])
            .find(|&x| spec.f(x) != 0.0)
        {
            fail("f=0 on [0,theta]", format!("f({x}) = {}", spec.f(x)));
        }
        if structured {
            if let Some(x) = interior(theta, 1.0).find(|&x| spec.f(x) <= 0.0) {
                fail("f>0 on (theta,1)", format!("f({x}) = {}", spec.f(x)));
            }
            if let Some(x) = interior(1.0, u_cap.max(1.0))
                .chain([1.0, u_cap.max(1.0)])
                .find(|&x| spec.f(x) > 0.0)
            {
                fail("f<=0 on [1,u_cap]", format!("f({x}) = {}", spec.f(x)));
            }
            if let Some(x) = interior(theta, theta + sigma).find(|&x| spec.df(x) <= 0.0) {
                fail(
                    "f'>0 on (theta,theta+sigma)",
                    format!("f'({x}) = {}", spec.df(x)),
                );
            }
        }
    }

    let sigma_lhs = (theta + sigma).powf(m) - theta.powf(m);
    let sigma_rhs = theta.powf(m) * m * (p - 1.0) / (p * (m - 1.0));
    if !(sigma_lhs < sigma_rhs) {
        fail(
            SIGMA_CONSTRAINT,
            format!("(theta+sigma)^m - theta^m = {sigma_lhs} >= {sigma_rhs}"),
        );
    }

    ValidationReport {
        violations: out,
        lipschitz_k: spec.lipschitz_k,
        sigma_lhs,
        sigma_rhs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(theta: f64, sigma: f64, p: f64, m: f64) -> ReactionSpec {
        ReactionSpec::new(theta, sigma, p, m).unwrap()
    }

    #[test]
    fn dead_zone_and_plateau_values() {
        let s = spec(0.3, 0.2, 2.0, 2.0);
        assert_eq!(eval_f(&s, 0.3).unwrap(), 0.0);
        assert!((eval_f(&s, 0.4).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(eval_f(&s, 1.0).unwrap(), 0.0);
        assert!(matches!(eval_f(&s, -1e-3), Err(Error::NegativeArgument(_))));
    }

    #[test]
    fn pressure_reaction_values() {
        let s = spec(0.3, 0.2, 2.0, 2.0);
        assert_eq!(eval_g(&s, 0.0).unwrap(), 0.0);
        assert_eq!(eval_g(&s, s.pressure_level()).unwrap(), 0.0);
        // m = 2 gives v = 2u; here u = θ + σ/2 = 0.4
        let v = 2.0 * 0.4;
        assert!((eval_g(&s, v).unwrap() - 0.02).abs() < 1e-14);
        assert!(eval_g(&s, -1.0).is_err());
    }

    #[test]
    fn blend_is_c1_at_both_joints() {
        let s = spec(0.3, 0.05, 3.0, 2.0);
        let top = s.theta + s.sigma;
        let eps = 1e-7;
        for x in [top, 1.0] {
            let left = (s.f(x) - s.f(x - eps)) / eps;
            let right = (s.f(x + eps) - s.f(x)) / eps;
            assert!(
                (left - right).abs() < 1e-5,
                "kink at {x}: {left} vs {right}"
            );
            assert!((s.df(x) - left).abs() < 1e-5);
        }
        assert!((s.df(1.0) + s.tail_slope()).abs() < 1e-12);
    }

    #[test]
    fn validation_examples() {
        let wide = validate(&ReactionSpec::new(0.3, 0.2, 2.0, 2.0).unwrap());
        assert!(!wide.sigma_constraint_ok());
        assert!((wide.sigma_lhs - 0.16).abs() < 1e-12);
        assert!((wide.sigma_rhs - 0.09).abs() < 1e-12);
        assert_eq!(wide.violations.len(), 1);

        let narrow = validate(&ReactionSpec::new(0.3, 0.02, 2.0, 2.0).unwrap());
        assert!(narrow.is_ok(), "{:?}", narrow.violations);
        assert!((narrow.sigma_lhs - 0.0124).abs() < 1e-12);

        let broken = validate(&ReactionSpec::unchecked(0.5, 0.6, 2.0, 2.0, 2.0));
        assert!(broken.violates("theta+sigma<1"));
        assert!(ReactionSpec::new(0.5, 0.6, 2.0, 2.0).is_err());
    }

    #[test]
    fn lipschitz_bound_covers_sampled_slopes() {
        let s = spec(0.3, 0.02, 2.0, 2.0);
        assert!(s.lipschitz_k >= s.tail_slope());
        assert!(s.lipschitz_k > 0.0);
    }

    fn any_spec() -> impl Strategy<Value = ReactionSpec> {
        (0.05f64..0.8, 0.01f64..0.9, 1.05f64..6.0, 1.1f64..4.0).prop_filter_map(
            "theta+sigma<1",
            |(t, sf, p, m)| {
                let sigma = sf * (1.0 - t) * 0.95;
                ReactionSpec::new(t, sigma, p, m).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn sign_structure(s in any_spec(), r in 0.0f64..1.0) {
            prop_assert_eq!(s.f(r * s.theta), 0.0);
            let inside = s.theta + r.max(1e-6).min(1.0 - 1e-6) * (1.0 - s.theta);
            prop_assert!(s.f(inside) > 0.0);
            prop_assert!(s.f(1.0 + r * (s.u_cap - 1.0)) <= 0.0);
        }

        #[test]
        fn plateau_is_exact_power(s in any_spec(), r in 0.0f64..=1.0) {
            let x = s.theta + r * s.sigma;
            prop_assert_eq!(s.f(x), (x - s.theta).powf(s.p));
        }

        #[test]
        fn g_is_the_chain_rule_image_of_f(s in any_spec(), r in 0.0f64..1.0) {
            let u = s.theta + r * (1.2 - s.theta);
            let m = s.m;
            let to_v = |u: f64| m / (m - 1.0) * u.powf(m - 1.0);
            let v = to_v(u);
            let h = 1e-5 * u;
            let fd = s.f(u) * (to_v(u + h) - to_v(u - h)) / (2.0 * h);
            let g = eval_g(&s, v).unwrap();
            prop_assert!((fd - g).abs() <= 1e-8 * g.abs().max(1e-12), "fd {} g {}", fd, g);
        }
    }
}
