//! Collision and fragmentation kernels.
//!
//! The collision rate `C(x, y)` is symmetric and may be singular at the
//! axes, bounded by `k1 (1+x)^ν (1+y)^ν / (xy)^σ` with `σ ∈ [0, 1/2]`. The
//! fragmentation density `F(x, y | z)` distributes daughters of size `x` from
//! a mother `y` hit by a partner `z`; it carries mass exactly
//! (`∫_0^y x F dx = y`) and is bounded by `k2 / y^β`.

mod collision;
mod fragmentation;
mod hypotheses;

pub use collision::{CollisionFamily, CollisionFn, CollisionKernel};
pub use fragmentation::{
    powerlaw_bound_constant, FragmentationFamily, FragmentationFn, FragmentationKernel, SplitRule,
};
pub use hypotheses::{verify_hypotheses, CheckStatus, HypothesisCheck, HypothesisReport};

use crate::error::Result;

/// `C(x, y)` with domain checks.
pub fn evaluate_collision(spec: &CollisionKernel, x: f64, y: f64) -> Result<f64> {
    spec.evaluate(x, y)
}

/// `F(x, y | z)` with domain checks; delta families are rejected.
pub fn evaluate_fragmentation(spec: &FragmentationKernel, x: f64, y: f64, z: f64) -> Result<f64> {
    spec.evaluate(x, y, z)
}

/// Mean number of daughters `θ(y, z) = ∫_0^y F(x, y | z) dx`.
pub fn fragment_count(spec: &FragmentationKernel, y: f64, z: f64) -> Result<f64> {
    spec.fragment_count(y, z)
}
