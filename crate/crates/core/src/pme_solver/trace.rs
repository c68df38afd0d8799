use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{Error, Result};
use crate::reaction::ReactionParams;

pub const TRACE_HEADER: &str = "t,l,r,theta_pos,u_center,mass";

/// One recorded time sample. `l`/`r` are `None` once the solution is
/// extinct; `theta_pos` is `None` whenever `u(0,t) ≤ θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub l: Option<f64>,
    pub r: Option<f64>,
    pub theta_pos: Option<f64>,
    pub u_center: f64,
    pub mass: f64,
    /// Not exported to CSV.
    #[serde(skip)]
    pub u_max: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FrontTrace {
    pub samples: Vec<TraceSample>,
    pub reaction: Option<ReactionParams>,
    pub m: f64,
    pub grid: Option<Grid>,
    /// Samples whose θ-level could not be located uniquely.
    pub theta_anomalies: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl FrontTrace {
    /// Trace built from bare `(t, r)` pairs, symmetric, no other data.
    pub fn from_fronts(ts: &[f64], rs: &[f64]) -> FrontTrace {
        let samples = ts
            .iter()
            .zip(rs)
            .map(|(&t, &r)| TraceSample {
                t,
                l: Some(-r),
                r: Some(r),
                theta_pos: None,
                u_center: 0.0,
                mass: 0.0,
                u_max: 0.0,
            })
            .collect();
        FrontTrace {
            samples,
            ..Default::default()
        }
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.t,
                opt(s.l),
                opt(s.r),
                opt(s.theta_pos),
                s.u_center,
                s.mass
            );
        }
        out
    }

    /// Parses CSV written by [`FrontTrace::to_csv`]. `u_max` is restored as
    /// `u_center`, which is exact for symmetric-decreasing profiles.
    pub fn from_csv(text: &str) -> Result<FrontTrace> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => {
                return Err(Error::Config(format!(
                    "trace CSV must start with `{TRACE_HEADER}`"
                )))
            }
        }
        let mut samples = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(Error::Config(format!(
                    "line {}: expected 6 columns, found {}",
                    no + 1,
                    cols.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))
            };
            let opt_num = |s: &str| -> Result<Option<f64>> {
                if s.trim().is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            let u_center = num(cols[4])?;
            samples.push(TraceSample {
                t: num(cols[0])?,
                l: opt_num(cols[1])?,
                r: opt_num(cols[2])?,
                theta_pos: opt_num(cols[3])?,
                u_center,
                mass: num(cols[5])?,
                u_max: u_center,
            });
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Config(
                "trace times must be strictly increasing".into(),
            ));
        }
        Ok(FrontTrace {
            samples,
            ..Default::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_full_precision() {
        let mut trace =
            FrontTrace::from_fronts(&[0.1, 0.2 + 1e-17, 3.0], &[1.0 / 3.0, 2.0f64.sqrt(), 7.0]);
        trace.samples[1].theta_pos = Some(0.123456789012345678);
        trace.samples[2].l = None;
        trace.samples[2].r = None;
        let text = trace.to_csv();
        assert!(text.starts_with("t,l,r,theta_pos,u_center,mass\n"));
        let back = FrontTrace::from_csv(&text).unwrap();
        assert_eq!(
            back.samples,
            trace
                .samples
                .iter()
                .map(|s| TraceSample {
                    u_max: s.u_center,
                    ..*s
                })
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn bad_csv_is_rejected() {
        assert!(FrontTrace::from_csv("a,b\n1,2\n").is_err());
        assert!(FrontTrace::from_csv("t,l,r,theta_pos,u_center,mass\n1,2,3\n").is_err());
        assert!(
            FrontTrace::from_csv("t,l,r,theta_pos,u_center,mass\n1,,,,0,0\n1,,,,0,0\n").is_err()
        );
    }
}
