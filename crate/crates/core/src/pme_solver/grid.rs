use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform node-centred grid with `n` cells (`n + 1` nodes).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    /// `x_min ≤ 0 < x_max`. A grid starting exactly at 0 is a half-line grid
    /// for runs with a prescribed left boundary value.
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Grid> {
        if n < 16 {
            return Err(Error::param("n", format!("{n} cells, need at least 16")));
        }
        if !(x_min <= 0.0 && x_max > 0.0 && x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::param(
                "x_max",
                format!("need x_min <= 0 < x_max, got [{x_min}, {x_max}]"),
            ));
        }
        Ok(Grid {
            x_min,
            n,
            dx: (x_max - x_min) / n as f64,
        })
    }

    /// `[-half_width, half_width]` with an even number of cells so that 0 is
    /// a node.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Grid> {
        let n = n + n % 2;
        Grid::new(-half_width, half_width, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.n as f64 * self.dx
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    /// Node nearest to `x = 0`.
    pub fn center_index(&self) -> usize {
        ((-self.x_min / self.dx).round() as usize).min(self.n)
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |i| self.x(i))
    }

    /// Grid with `left` extra cells before and `right` after, same spacing.
    pub(crate) fn extended(&self, left: usize, right: usize) -> Grid {
        Grid {
            x_min: self.x_min - left as f64 * self.dx,
            n: self.n + left + right,
            dx: self.dx,
        }
    }
}
