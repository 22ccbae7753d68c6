//! Cutoff collision kernels `C_n`.

use crate::error::{Error, Result};
use crate::grid::GeometricGrid;
use crate::kernels::CollisionKernel;

/// `C_n(x, y) = C(x, y) · ρ(x) · ρ(y)` where `ρ` is 1 on `[1/n, n]` and falls
/// linearly in `ln x` to 0 across a collar of width `taper_fraction · ln n`.
#[derive(Debug, Clone)]
pub struct TruncatedKernel {
    base: CollisionKernel,
    n: f64,
    taper_fraction: f64,
}

impl TruncatedKernel {
    pub fn new(base: CollisionKernel, n: f64, taper_fraction: f64) -> Result<Self> {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::Domain(format!("truncation index must be >= 1, got {n}")));
        }
        if !(taper_fraction > 0.0 && taper_fraction <= 1.0) {
            return Err(Error::Parameter(format!("taper_fraction must lie in (0, 1], got {taper_fraction}")));
        }
        Ok(Self { base, n, taper_fraction })
    }

    pub fn base(&self) -> &CollisionKernel {
        &self.base
    }
    pub fn n(&self) -> f64 {
        self.n
    }
    pub fn taper_fraction(&self) -> f64 {
        self.taper_fraction
    }

    /// Collar width in `ln x`.
    pub fn collar(&self) -> f64 {
        self.taper_fraction * self.n.ln()
    }

    pub fn ramp(&self, x: f64) -> f64 {
        let ln_n = self.n.ln();
        let excess = (x.ln().abs() - ln_n).max(0.0);
        if excess == 0.0 {
            return 1.0;
        }
        let width = self.collar();
        if width <= 0.0 {
            return 0.0;
        }
        (1.0 - excess / width).max(0.0)
    }

    /// `C_n(x, y)`; exact equality with `C` inside the box.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        let c = self.base.evaluate(x, y)?;
        Ok(c * (self.ramp(x) * self.ramp(y)))
    }

    pub(crate) fn rate(&self, x: f64, y: f64) -> f64 {
        let c = self.base.rate(x, y);
        let (rx, ry) = (self.ramp(x), self.ramp(y));
        if rx == 1.0 && ry == 1.0 {
            c
        } else {
            c * (rx * ry)
        }
    }

    /// Row-major `C_n(pivot_i, pivot_j)`.
    pub fn pivot_matrix(&self, grid: &GeometricGrid) -> Vec<f64> {
        let p = grid.pivots();
        let mut out = Vec::with_capacity(p.len() * p.len());
        for &x in p {
            for &y in p {
                out.push(self.rate(x, y));
            }
        }
        out
    }
}

pub fn truncate_kernel(spec: &CollisionKernel, n: f64, taper_fraction: f64) -> Result<TruncatedKernel> {
    TruncatedKernel::new(spec.clone(), n, taper_fraction)
}
