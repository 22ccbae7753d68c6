use thiserror::Error;

/// Errors raised by kernel evaluation, discretization and time marching.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("range error: {value} lies outside [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error(
        "fixed-point iteration did not converge in {iterations} iterations \
         (last difference {last_difference:e}, geometric bound {predicted_bound:e})"
    )]
    Convergence {
        iterations: usize,
        last_difference: f64,
        predicted_bound: f64,
    },

    #[error("contraction estimate is inconsistent: k = {0} at the selected slab length")]
    InconsistentEstimate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_size(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be a positive finite size, got {v}")))
    }
}
