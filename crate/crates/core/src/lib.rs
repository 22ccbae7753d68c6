//! Mass-conserving simulation of collision-induced fragmentation with
//! singular collision kernels on truncated size domains.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod par;
pub mod quad;
pub mod solver;

pub mod state;

pub use error::{Error, Result};
pub use grid::{build_grid, GeometricGrid};
pub use par::ExecMode;
pub use state::DensityState;
