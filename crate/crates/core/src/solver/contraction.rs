//! Slab length and contraction factor from the a-priori constants.
//!
//! With `Λ = e^{λ(1+n)}/λ + e^{2λ} n^{1−r}/(1−r)`:
//!
//! * `L = ‖g₀‖ + Λ M² T N₁(0)²`
//! * `t′`: largest `t` with `e^{2tML} (1 + 4 L K₁ t Λ) ≤ 2`
//! * `t″`: largest `t` with `k(t) = e^{tBM} (M t ‖g₀‖ + K₁ Λ (M t² B² + 2 B t)) < 1`, `B = 2L`
//! * `t₀ = min(t′, t″, T)`, `k = k(t₀)`
//!
//! where `K₁ = k₁ k₂` and `M` bounds both kernels on the truncated box.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{FragmentationFamily, FragmentationKernel};
use crate::solver::rhs::DiscreteModel;
use crate::state::WeightedNormParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// Common bound of `C` and `F` on the truncated box.
    pub m: f64,
    /// Radius parameter: iterates stay in the ball `‖g‖ ≤ 2L`.
    pub l: f64,
    pub t_prime: f64,
    pub t_double_prime: f64,
    pub t0: f64,
    /// Contraction factor at `t0`.
    pub k: f64,
    /// `Λ(λ, r, n)`.
    pub big_lambda: f64,
    /// `K₁ = k₁ k₂`.
    pub k1k2: f64,
    /// Horizon used in `L`.
    pub horizon: f64,
}

impl ContractionEstimate {
    pub fn ball_radius(&self) -> f64 {
        2.0 * self.l
    }
}

/// Grid-independent constants of the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionConstants {
    pub m: f64,
    pub k1k2: f64,
    pub lambda: f64,
    pub r: f64,
    pub n: f64,
}

impl ContractionConstants {
    /// `M` from the tabulated model: the collision supremum is sampled on
    /// the grid edges and pivots; the fragmentation supremum is exact for
    /// power laws, sampled for custom densities and read off the weight
    /// table for half-splits.
    pub fn from_model(model: &DiscreteModel, norm: &WeightedNormParams) -> Self {
        let grid = model.grid();
        let kernel = model.kernel();
        let mut lattice: Vec<f64> = grid.edges().iter().chain(grid.pivots()).copied().collect();
        lattice.sort_by(f64::total_cmp);
        let mut sup_c: f64 = 0.0;
        for (a, &x) in lattice.iter().enumerate() {
            for &y in &lattice[a..] {
                sup_c = sup_c.max(kernel.rate(x, y));
            }
        }
        let f = model.fragmentation();
        let sup_f = match f.family() {
            FragmentationFamily::Powerlaw { alpha } => {
                crate::kernels::powerlaw_bound_constant(alpha, 0.0, grid.n())
            }
            FragmentationFamily::HalfSplit { .. } => model.table().max_density(grid),
            FragmentationFamily::Custom => sample_sup(f, &lattice),
        };
        let k2 = if f.is_delta() { model.table().effective_k2(grid, f.beta()) } else { f.k2() };
        let k1 = kernel.base().k1();
        Self::new(sup_c, sup_f, k1 * k2, norm, grid.n())
    }

    /// A vanishing collision kernel switches the dynamics off, so `M` and
    /// `K₁` are zero regardless of the fragmentation bound.
    pub fn new(sup_c: f64, sup_f: f64, k1k2: f64, norm: &WeightedNormParams, n: f64) -> Self {
        let (m, k1k2) = if sup_c == 0.0 { (0.0, 0.0) } else { (sup_c.max(sup_f), k1k2) };
        Self { m, k1k2, lambda: norm.lambda(), r: norm.r(), n }
    }

    pub fn big_lambda(&self) -> f64 {
        (self.lambda * (1.0 + self.n)).exp() / self.lambda
            + (2.0 * self.lambda).exp() * self.n.powf(1.0 - self.r) / (1.0 - self.r)
    }

    pub fn estimate(&self, g0_norm: f64, g0_mass: f64, horizon: f64) -> Result<ContractionEstimate> {
        if !(g0_norm.is_finite() && g0_mass.is_finite() && horizon.is_finite()) {
            return Err(Error::Parameter("contraction estimate needs finite norms and horizon".into()));
        }
        let big = self.big_lambda();
        let (m, k1) = (self.m, self.k1k2);
        let l = g0_norm + big * m * m * horizon * g0_mass * g0_mass;
        let b = 2.0 * l;
        let lhs14 = |t: f64| (2.0 * t * m * l).exp() * (1.0 + 4.0 * l * k1 * t * big);
        let lhs15 = |t: f64| (t * b * m).exp() * (m * t * g0_norm + k1 * big * (m * t * t * b * b + 2.0 * b * t));
        let (t_prime, t_double_prime) = if m == 0.0 && k1 == 0.0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (largest_below(lhs14, 2.0, true), largest_below(lhs15, 1.0, false))
        };
        let t0 = t_prime.min(t_double_prime).min(horizon);
        let k = if m == 0.0 && k1 == 0.0 { 0.0 } else { lhs15(t0) };
        if !(k < 1.0) {
            return Err(Error::InconsistentEstimate(k));
        }
        Ok(ContractionEstimate {
            m,
            l,
            t_prime,
            t_double_prime,
            t0,
            k,
            big_lambda: big,
            k1k2: k1,
            horizon,
        })
    }
}

fn sample_sup(f: &FragmentationKernel, lattice: &[f64]) -> f64 {
    let mut sup: f64 = 0.0;
    let zs: Vec<f64> = if f.partner_dependent() { lattice.to_vec() } else { vec![1.0] };
    for &z in &zs {
        for (j, &y) in lattice.iter().enumerate() {
            for &x in &lattice[..=j] {
                sup = sup.max(f.density(x, y, z));
            }
        }
    }
    sup
}

/// Largest `t ≥ 0` with `f(t) ≤ level` (`inclusive`) or `f(t) < level`,
/// for nondecreasing `f`; infinite when `f` never reaches the level.
fn largest_below(f: impl Fn(f64) -> f64, level: f64, inclusive: bool) -> f64 {
    let ok = |t: f64| {
        let v = f(t);
        if inclusive {
            v <= level
        } else {
            v < level
        }
    };
    let mut lo = f64::MIN_POSITIVE;
    if !ok(lo) {
        return 0.0;
    }
    let mut hi;
    loop {
        hi = 2.0 * lo;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
        if !ok(hi) {
            break;
        }
        lo = hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
