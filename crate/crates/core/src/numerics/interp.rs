//! Piecewise Hermite interpolation of tabulated profiles.

/// Cubic Hermite interpolant on an increasing abscissa. Slopes are either
/// supplied (exact derivatives from an ODE) or estimated; in both cases they
/// are passed through the Fritsch-Carlson limiter so the interpolant is
/// monotone wherever the data are.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, slopes: Option<Vec<f64>>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "need at least two nodes");
        let n = xs.len();
        let secant: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut ds = match slopes {
            Some(d) => {
                assert_eq!(d.len(), n);
                d
            }
            None => {
                let mut d = vec![0.0; n];
                d[0] = secant[0];
                d[n - 1] = secant[n - 2];
                for i in 1..n - 1 {
                    d[i] = if secant[i - 1] * secant[i] <= 0.0 {
                        0.0
                    } else {
                        0.5 * (secant[i - 1] + secant[i])
                    };
                }
                d
            }
        };
        for i in 0..n - 1 {
            let s = secant[i];
            if s == 0.0 {
                ds[i] = 0.0;
                ds[i + 1] = 0.0;
                continue;
            }
            if ds[i] * s < 0.0 {
                ds[i] = 0.0;
            }
            if ds[i + 1] * s < 0.0 {
                ds[i + 1] = 0.0;
            }
            let a = ds[i] / s;
            let b = ds[i + 1] / s;
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                ds[i] = tau * a * s;
                ds[i + 1] = tau * b * s;
            }
        }
        MonotoneCubic { xs, ys, ds }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Value at `x`, clamped to the end values outside the table.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }
}

/// Quintic Hermite interpolation of one interval given value, first and
/// second derivative at both ends. Returns `(f, f', f'')` at `x`.
#[allow(clippy::too_many_arguments)]
pub fn quintic_hermite(x0: f64, x1: f64, f0: [f64; 3], f1: [f64; 3], x: f64) -> [f64; 3] {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;

    let b = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        0.5 * (s3 - 2.0 * s4 + s5),
    ];
    let db = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4),
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4),
    ];
    let ddb = [
        -60.0 * s + 180.0 * s2 - 120.0 * s3,
        -36.0 * s + 96.0 * s2 - 60.0 * s3,
        0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3),
        60.0 * s - 180.0 * s2 + 120.0 * s3,
        -24.0 * s + 84.0 * s2 - 60.0 * s3,
        0.5 * (6.0 * s - 24.0 * s2 + 20.0 * s3),
    ];
    let c = [
        f0[0],
        h * f0[1],
        h * h * f0[2],
        f1[0],
        h * f1[1],
        h * h * f1[2],
    ];
    let dot = |w: &[f64; 6]| w.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
    [dot(&b), dot(&db) / h, dot(&ddb) / (h * h)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_reproduces_cubic_with_exact_slopes() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let f = |x: f64| -(x * x * x) - x;
        let df = |x: f64| -3.0 * x * x - 1.0;
        let interp = MonotoneCubic::new(
            xs.clone(),
            xs.iter().map(|&x| f(x)).collect(),
            Some(xs.iter().map(|&x| df(x)).collect()),
        );
        for k in 0..97 {
            let x = k as f64 / 97.0;
            assert!((interp.eval(x) - f(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn limiter_keeps_step_data_monotone() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![1.0, 1.0, 0.9, 0.0, 0.0];
        let interp = MonotoneCubic::new(xs, ys, None);
        let mut prev = f64::INFINITY;
        for k in 0..=400 {
            let v = interp.eval(k as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn quintic_reproduces_quintic() {
        let f = |x: f64| {
            [
                x.powi(5) - x * x,
                5.0 * x.powi(4) - 2.0 * x,
                20.0 * x.powi(3) - 2.0,
            ]
        };
        let (a, b) = (0.3, 1.1);
        for k in 0..=10 {
            let x = a + (b - a) * k as f64 / 10.0;
            let got = quintic_hermite(a, b, f(a), f(b), x);
            let want = f(x);
            for j in 0..3 {
                assert!((got[j] - want[j]).abs() < 1e-12, "{j} {x}");
            }
        }
    }
}
