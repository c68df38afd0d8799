//! Ordinary least squares for straight-line fits.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for fewer than three points).
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Fits `y = intercept + slope * x`. Returns `None` when fewer than two
/// points are given or all `x` coincide.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0]).is_none());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    proptest! {
        #[test]
        fn exact_lines_are_recovered(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 3usize..50) {
            let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 - 2.0).collect();
            let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            let fit = fit_line(&x, &y).unwrap();
            prop_assert!((fit.slope - b).abs() < 1e-10);
            prop_assert!((fit.intercept - a).abs() < 1e-10);
            prop_assert!(fit.slope_stderr < 1e-8);
        }
    }
}
