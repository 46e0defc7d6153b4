//! Uniform grids with composite trapezoid weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform discretization of a closed interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    n_points: usize,
    spacing: f64,
    quad_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridSpec {
    lo: f64,
    hi: f64,
    n: usize,
}

impl TryFrom<GridSpec> for Grid1D {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        Grid1D::new(s.lo, s.hi, s.n)
    }
}

impl From<Grid1D> for GridSpec {
    fn from(g: Grid1D) -> Self {
        GridSpec {
            lo: g.lo,
            hi: g.hi,
            n: g.n_points,
        }
    }
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::invalid(format!(
                "grid bounds must be finite with lo < hi (got [{lo}, {hi}])"
            )));
        }
        if n_points < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points (got {n_points})")));
        }
        let spacing = (hi - lo) / (n_points - 1) as f64;
        let mut quad_weights = vec![spacing; n_points];
        quad_weights[0] = 0.5 * spacing;
        quad_weights[n_points - 1] = 0.5 * spacing;
        Ok(Self {
            lo,
            hi,
            n_points,
            spacing,
            quad_weights,
        })
    }

    /// Grid with a prescribed spacing; `hi - lo` must be a whole multiple of it.
    pub fn with_spacing(lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid(format!("spacing must be positive (got {spacing})")));
        }
        let cells = (hi - lo) / spacing;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 * cells.max(1.0) {
            return Err(Error::invalid(format!(
                "interval [{lo:e}, {hi:e}] is not a whole number of cells of width {spacing:e}"
            )));
        }
        Self::new(lo, hi, rounded as usize + 1)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Index of the node closest to `x`, if `x` lies within half a cell of the grid.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let pos = (x - self.lo) / self.spacing;
        if pos < -0.5 || pos > (self.n_points - 1) as f64 + 0.5 {
            return None;
        }
        Some((pos.round().max(0.0) as usize).min(self.n_points - 1))
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_points);
        values.iter().zip(&self.quad_weights).map(|(v, w)| v * w).sum()
    }

    /// Weighted inner product `Σ w_i a_i b_i`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.quad_weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// Piecewise-linear interpolation; zero outside `[lo, hi]`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let pos = (x - self.lo) / self.spacing;
        let i = (pos.floor() as usize).min(self.n_points - 2);
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }

    pub fn same_as(&self, other: &Grid1D) -> bool {
        self.n_points == other.n_points
            && (self.lo - other.lo).abs() <= 1e-12 * self.lo.abs().max(self.spacing)
            && (self.hi - other.hi).abs() <= 1e-12 * self.hi.abs().max(self.spacing)
    }
}
