//! Sectioned TOML experiment configs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pme_solver::{Grid, PmeProblem, State};
use crate::reaction::{validate, ReactionParams, ReactionSpec, SIGMA_CONSTRAINT};
use crate::threshold::{ProbeSetup, Psi};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "defaults::x_max")]
    pub x_max: f64,
    #[serde(default = "defaults::n")]
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::sample_every")]
    pub sample_every: f64,
    #[serde(default = "defaults::safety")]
    pub safety: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Tent,
    Box,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    #[serde(default = "defaults::shape")]
    pub shape: Shape,
    #[serde(default = "defaults::width")]
    pub width: f64,
    #[serde(default = "defaults::height")]
    pub height: f64,
    /// Multiplier used by `solve`.
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
}

impl PsiConfig {
    pub fn psi(&self) -> Psi {
        match self.shape {
            Shape::Tent => Psi::Tent {
                width: self.width,
                height: self.height,
            },
            Shape::Box => Psi::Box {
                width: self.width,
                height: self.height,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default = "defaults::tol")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Values of `p`; omitted means the `[reaction]` value only.
    pub p: Option<Vec<f64>>,
    pub m: Option<Vec<f64>>,
    #[serde(default = "defaults::workers")]
    pub workers: usize,
    /// What each cell runs.
    #[serde(default)]
    pub command: CellCommand,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellCommand {
    #[default]
    Solve,
    FindLambda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub reaction: ReactionParams,
    #[serde(default = "defaults::grid")]
    pub grid: GridConfig,
    #[serde(default = "defaults::run")]
    pub run: RunConfig,
    #[serde(default = "defaults::psi")]
    pub psi: PsiConfig,
    #[serde(default = "defaults::threshold")]
    pub threshold: ThresholdConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

mod defaults {
    use super::*;

    pub fn x_max() -> f64 {
        4.0
    }
    pub fn n() -> usize {
        400
    }
    pub fn horizon() -> f64 {
        10.0
    }
    pub fn sample_every() -> f64 {
        0.1
    }
    pub fn safety() -> f64 {
        0.4
    }
    pub fn shape() -> Shape {
        Shape::Tent
    }
    pub fn width() -> f64 {
        2.0
    }
    pub fn height() -> f64 {
        1.0
    }
    pub fn lambda() -> f64 {
        1.0
    }
    pub fn tol() -> f64 {
        1e-6
    }
    pub fn workers() -> usize {
        1
    }
    pub fn grid() -> GridConfig {
        GridConfig {
            x_max: x_max(),
            n: n(),
        }
    }
    pub fn run() -> RunConfig {
        RunConfig {
            horizon: horizon(),
            sample_every: sample_every(),
            safety: safety(),
        }
    }
    pub fn psi() -> PsiConfig {
        PsiConfig {
            shape: shape(),
            width: width(),
            height: height(),
            lambda: lambda(),
        }
    }
    pub fn threshold() -> ThresholdConfig {
        ThresholdConfig { tol: tol() }
    }
}

/// One problem found while loading a config.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigIssue {
    /// 1-based line, when it can be located.
    pub line: Option<usize>,
    /// `section.key` or a short description.
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line holding `key = ...` inside `[section]`.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Key named by a reaction validation condition.
fn condition_key(condition: &str) -> &'static str {
    match condition {
        c if c.starts_with("theta+sigma") || c.starts_with("sigma") => "sigma",
        c if c.starts_with("theta") => "theta",
        c if c.starts_with('p') || c.starts_with('f') => "p",
        c if c.starts_with('m') => "m",
        _ => "sigma",
    }
}

impl ExperimentConfig {
    pub fn spec(&self) -> Result<ReactionSpec> {
        ReactionSpec::from_params(&self.reaction)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::symmetric(self.grid.x_max, self.grid.n)
    }

    pub fn problem(&self) -> Result<PmeProblem> {
        Ok(PmeProblem::with_reaction(self.spec()?))
    }

    pub fn initial_state(&self) -> Result<(State, Grid)> {
        let grid = self.grid()?;
        let psi = self.psi.psi();
        let lambda = self.psi.lambda;
        Ok((State::from_fn(&grid, 0.0, |x| lambda * psi.eval(x)), grid))
    }

    pub fn probe_setup(&self) -> Result<ProbeSetup> {
        Ok(ProbeSetup {
            spec: self.spec()?,
            psi: self.psi.psi(),
            x_max: self.grid.x_max,
            n: self.grid.n,
            horizon: self.run.horizon,
            sample_every: self.run.sample_every,
            safety: self.run.safety,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Invariant checks, as `(issues, warnings)`. The σ-constraint only
    /// matters for the monotonicity of the bump widths and is a warning.
    pub fn check(&self, text: Option<&str>) -> (Vec<ConfigIssue>, Vec<String>) {
        let at = |section: &str, key: &str| text.and_then(|t| locate(t, section, key));
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        let mut push = |section: &str, key: &str, message: String| {
            issues.push(ConfigIssue {
                line: at(section, key),
                key: format!("{section}.{key}"),
                message,
            });
        };
        let r = &self.reaction;
        let report = validate(&ReactionSpec::unchecked(
            r.theta, r.sigma, r.p, r.m, r.u_cap,
        ));
        for v in &report.violations {
            if v.condition == SIGMA_CONSTRAINT {
                warnings.push(format!("{}: {}", v.condition, v.detail));
            } else {
                let condition = match v.condition {
                    "theta in (0,1)" if r.theta >= 1.0 => "theta<1",
                    "theta in (0,1)" => "theta>0",
                    c => c,
                };
                push(
                    "reaction",
                    condition_key(v.condition),
                    format!("{condition} violated ({})", v.detail),
                );
            }
        }
        if !(r.u_cap >= 1.0) {
            push(
                "reaction",
                "u_cap",
                format!("{} must be at least 1", r.u_cap),
            );
        }
        if self.grid.n < 16 {
            push(
                "grid",
                "n",
                format!("{} cells, need at least 16", self.grid.n),
            );
        }
        if !(self.grid.x_max > 0.5 * self.psi.width) {
            push(
                "grid",
                "x_max",
                format!(
                    "{} does not contain the datum of width {}",
                    self.grid.x_max, self.psi.width
                ),
            );
        }
        if !(self.run.horizon > 0.0 && self.run.horizon.is_finite()) {
            push(
                "run",
                "horizon",
                format!("{} must be positive", self.run.horizon),
            );
        }
        if !(self.run.sample_every > 0.0 && self.run.sample_every <= self.run.horizon) {
            push(
                "run",
                "sample_every",
                format!("{} must lie in (0, horizon]", self.run.sample_every),
            );
        }
        if !(self.run.safety > 0.0 && self.run.safety <= 1.0) {
            push(
                "run",
                "safety",
                format!("{} must lie in (0, 1]", self.run.safety),
            );
        }
        if !(self.psi.width > 0.0) {
            push(
                "psi",
                "width",
                format!("{} must be positive", self.psi.width),
            );
        }
        if !(self.psi.height > 0.0) {
            push(
                "psi",
                "height",
                format!("{} must be positive", self.psi.height),
            );
        }
        if !(self.psi.lambda >= 0.0) {
            push(
                "psi",
                "lambda",
                format!("{} must be nonnegative", self.psi.lambda),
            );
        }
        if !(self.threshold.tol > 0.0 && self.threshold.tol < 1.0) {
            push(
                "threshold",
                "tol",
                format!("{} must lie in (0, 1)", self.threshold.tol),
            );
        }
        if let Some(s) = &self.sweep {
            if s.workers == 0 {
                push("sweep", "workers", "must be at least 1".into());
            }
        }
        (issues, warnings)
    }
}

/// Parses and validates a config. Errors come back as a list, each with a
/// line number where one can be found.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, Vec<ConfigIssue>> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        vec![ConfigIssue {
            line,
            key: "syntax".into(),
            message: e.message().to_string(),
        }]
    })?;
    let (issues, _) = cfg.check(Some(text));
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

/// [`parse_config`] with the issue list folded into a single error.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    parse_config(text).map_err(|issues| {
        Error::Config(
            issues
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[reaction]\ntheta = 0.3\nsigma = 0.02\np = 4.0\nm = 2.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.grid, defaults::grid());
        assert_eq!(cfg.run.safety, 0.4);
        assert_eq!(cfg.psi.shape, Shape::Tent);
        assert_eq!(cfg.reaction.u_cap, 2.0);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn violations_carry_line_numbers() {
        let text =
            "[reaction]\ntheta = 1.2\nsigma = 0.02\np = 4.0\nm = 2.0\n\n[run]\nsafety = 3.0\n";
        let issues = parse_config(text).unwrap_err();
        let theta = issues.iter().find(|i| i.key == "reaction.theta").unwrap();
        assert_eq!(theta.line, Some(2));
        assert!(theta.message.contains("theta<1"));
        let safety = issues.iter().find(|i| i.key == "run.safety").unwrap();
        assert_eq!(safety.line, Some(8));
    }

    #[test]
    fn unknown_keys_and_syntax_errors() {
        let unknown = format!("{MINIMAL}\n[grid]\nx_max = 3.0\ncells = 10\n");
        let issues = parse_config(&unknown).unwrap_err();
        assert_eq!(issues[0].key, "syntax");
        assert!(issues[0].message.contains("cells"));
        assert_eq!(issues[0].line, Some(9));
        let broken = "[reaction\ntheta = 0.3\n";
        assert_eq!(parse_config(broken).unwrap_err()[0].line, Some(1));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = format!("{MINIMAL}\n[psi]\nshape = \"box\"\nwidth = 3.0\n\n[sweep]\np = [2.0, 5.0]\nworkers = 2\n");
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn sigma_constraint_is_only_a_warning() {
        let text = "[reaction]\ntheta = 0.3\nsigma = 0.2\np = 5.0\nm = 2.0\n";
        let cfg = parse_config(text).unwrap();
        let (issues, warnings) = cfg.check(None);
        assert!(issues.is_empty());
        assert_eq!(warnings.len(), 1);
    }
}
