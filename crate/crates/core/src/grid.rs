//! Log-spaced grid on the truncated size interval `[1/n, n]`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Geometric grid with constant edge ratio `q = (n²)^{1/cells}` and pivots at
/// the geometric mean of each cell's edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometricGrid {
    n: f64,
    cells_per_decade: usize,
    edges: Vec<f64>,
    pivots: Vec<f64>,
    widths: Vec<f64>,
}

/// Number of cells for a truncation index and resolution:
/// `ceil(cells_per_decade · log10(n²))`, at least 2.
pub fn cell_count(n: f64, cells_per_decade: usize) -> usize {
    let raw = (cells_per_decade as f64 * (n * n).log10()).ceil();
    // Guard against log10 rounding pushing an exact integer up by one.
    let exact = cells_per_decade as f64 * (n * n).log10();
    let count = if (exact - exact.round()).abs() < 1e-9 { exact.round() } else { raw };
    (count as usize).max(2)
}

pub fn build_grid(n: f64, cells_per_decade: usize) -> Result<GeometricGrid> {
    if !(n > 1.0) || !n.is_finite() {
        return Err(Error::Domain(format!(
            "truncation index n must be a finite real > 1, got {n}"
        )));
    }
    if cells_per_decade == 0 {
        return Err(Error::Domain("cells_per_decade must be at least 1".into()));
    }
    let cells = cell_count(n, cells_per_decade);
    let lo = 1.0 / n;
    let log_span = 2.0 * n.ln();
    let mut edges: Vec<f64> = (0..=cells)
        .map(|i| lo * (log_span * i as f64 / cells as f64).exp())
        .collect();
    edges[0] = lo;
    edges[cells] = n;
    let pivots = edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect();
    let widths = edges.windows(2).map(|e| e[1] - e[0]).collect();
    Ok(GeometricGrid { n, cells_per_decade, edges, pivots, widths })
}

impl GeometricGrid {
    pub fn n(&self) -> f64 {
        self.n
    }
    pub fn cells_per_decade(&self) -> usize {
        self.cells_per_decade
    }
    pub fn len(&self) -> usize {
        self.pivots.len()
    }
    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn lower(&self) -> f64 {
        self.edges[0]
    }
    pub fn upper(&self) -> f64 {
        self.edges[self.len()]
    }
    /// Edge ratio `q`.
    pub fn ratio(&self) -> f64 {
        (2.0 * self.n.ln() / self.len() as f64).exp()
    }
    pub fn cell(&self, i: usize) -> (f64, f64, f64) {
        (self.edges[i], self.edges[i + 1], self.pivots[i])
    }

    /// `Σ pivot_i^p · values_i · width_i`.
    pub fn quadrature(&self, values: &[f64], p: f64) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::Contract(format!(
                "expected {} cell values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(self.weighted_sum(values, |x| x.powf(p)))
    }

    /// `Σ w(pivot_i) · values_i · width_i`; callers guarantee matching lengths.
    pub(crate) fn weighted_sum(&self, values: &[f64], w: impl Fn(f64) -> f64) -> f64 {
        self.pivots
            .iter()
            .zip(&self.widths)
            .zip(values)
            .map(|((&x, &dx), &v)| w(x) * v * dx)
            .sum()
    }

    /// Index of the cell with `left ≤ x < right`; the last cell is closed.
    pub fn locate_cell(&self, x: f64) -> Result<usize> {
        if !(x >= self.lower() && x <= self.upper()) {
            return Err(Error::Range { value: x, lo: self.lower(), hi: self.upper() });
        }
        let idx = self.edges.partition_point(|&e| e <= x);
        Ok(idx.saturating_sub(1).min(self.len() - 1))
    }
}

pub fn quadrature(values: &[f64], grid: &GeometricGrid, p: f64) -> Result<f64> {
    grid.quadrature(values, p)
}

pub fn locate_cell(grid: &GeometricGrid, x: f64) -> Result<usize> {
    grid.locate_cell(x)
}
