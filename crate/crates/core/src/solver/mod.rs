//! Truncated kernels, the discrete right-hand side, the fixed-point slab
//! integrator with its contraction constants, and an explicit RK4 check.

pub mod contraction;
pub mod fragments;
pub mod picard;
pub mod rhs;
pub mod rk4;
pub mod solve;
pub mod truncation;

pub use contraction::{ContractionConstants, ContractionEstimate};
pub use fragments::{discretize_fragments, FitKind, FragmentTable, FragmentWeights};
pub use picard::{apply_operator, picard_slab, slab_norm, PicardOptions, SlabOutcome, SlabQuadrature, TimeRule};
pub use rhs::{death_rate, gain_rate, DiscreteModel, Rates};
pub use rk4::{rk4_step, Rk4Step};
pub use solve::{
    solve, solve_rk4, solve_rk4_with, solve_with, EventLog, ShatteringInfo, SlabEvent, SlabPolicy, SolverConfig,
    Trajectory,
};
pub use truncation::{truncate_kernel, TruncatedKernel};

use crate::error::Result;
use crate::state::DensityState;

/// Contraction constants for `config` at the given initial norms.
pub fn estimate_contraction(config: &SolverConfig, g0_norm: f64, g0_mass: f64) -> Result<ContractionEstimate> {
    let model = config.model()?;
    ContractionConstants::from_model(&model, &config.norm).estimate(g0_norm, g0_mass, config.horizon)
}

/// One fixed-point slab of length `estimate.t0` from `state`.
pub fn picard_slab_step(
    state: &DensityState,
    model: &DiscreteModel,
    config: &SolverConfig,
    estimate: &ContractionEstimate,
) -> Result<(DensityState, SlabOutcome)> {
    let quad = config.time_rule.matrix()?;
    let opts = PicardOptions { tol: config.picard_tol, max_iter: config.picard_max_iter, k_hint: Some(estimate.k) };
    let out = picard_slab(model, state.values(), estimate.t0, &quad, &config.norm, opts)?;
    let next = DensityState::from_values(state.grid().clone(), out.end.clone(), state.time() + estimate.t0)?;
    Ok((next, out))
}
