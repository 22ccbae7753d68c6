use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{require_size, Error, Result};

pub type CollisionFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionFamily {
    Constant,
    SingularProduct,
    Brownian,
    ChengRednerI,
    ChengRednerII,
    ChengRednerIII,
    Custom,
}

impl CollisionFamily {
    pub const PRESETS: [CollisionFamily; 6] = [
        CollisionFamily::Constant,
        CollisionFamily::SingularProduct,
        CollisionFamily::Brownian,
        CollisionFamily::ChengRednerI,
        CollisionFamily::ChengRednerII,
        CollisionFamily::ChengRednerIII,
    ];

    pub fn preset_name(self) -> &'static str {
        match self {
            CollisionFamily::Constant => "constant",
            CollisionFamily::SingularProduct => "singular-product",
            CollisionFamily::Brownian => "brownian",
            CollisionFamily::ChengRednerI => "cr-model-1",
            CollisionFamily::ChengRednerII => "cr-model-2",
            CollisionFamily::ChengRednerIII => "cr-model-3",
            CollisionFamily::Custom => "custom",
        }
    }

    pub fn from_preset_name(name: &str) -> Option<Self> {
        Self::PRESETS
            .into_iter()
            .chain(std::iter::once(CollisionFamily::Custom))
            .find(|f| f.preset_name() == name)
    }
}

/// Symmetric collision rate together with its singular bound parameters.
#[derive(Clone)]
pub struct CollisionKernel {
    family: CollisionFamily,
    k1: f64,
    sigma: f64,
    nu: f64,
    xi: f64,
    custom: Option<CollisionFn>,
}

impl fmt::Debug for CollisionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CollisionKernel")
            .field("family", &self.family)
            .field("k1", &self.k1)
            .field("sigma", &self.sigma)
            .field("nu", &self.nu)
            .field("xi", &self.xi)
            .finish_non_exhaustive()
    }
}

fn check_bound_params(k1: f64, sigma: f64, nu: f64) -> Result<()> {
    if !(k1 >= 0.0 && k1.is_finite()) {
        return Err(Error::Parameter(format!("k1 must be a nonnegative finite rate, got {k1}")));
    }
    if !(0.0..=0.5).contains(&sigma) {
        return Err(Error::Parameter(format!("sigma must lie in [0, 1/2], got {sigma}")));
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::Parameter(format!("nu must lie in [0, 1], got {nu}")));
    }
    Ok(())
}

impl CollisionKernel {
    pub fn constant(k1: f64) -> Result<Self> {
        check_bound_params(k1, 0.0, 0.0)?;
        Ok(Self { family: CollisionFamily::Constant, k1, sigma: 0.0, nu: 0.0, xi: 0.0, custom: None })
    }

    /// The singular bound taken as the kernel itself.
    pub fn singular_product(k1: f64, sigma: f64, nu: f64) -> Result<Self> {
        check_bound_params(k1, sigma, nu)?;
        Ok(Self { family: CollisionFamily::SingularProduct, k1, sigma, nu, xi: 0.0, custom: None })
    }

    /// Brownian kernel `(k1/4)(x^{1/3} + y^{1/3})(x^{-1/3} + y^{-1/3})`,
    /// normalised so that it sits under the singular bound with σ = 1/3, ν = 2/3.
    pub fn brownian(k1: f64) -> Result<Self> {
        check_bound_params(k1, 1.0 / 3.0, 2.0 / 3.0)?;
        Ok(Self {
            family: CollisionFamily::Brownian,
            k1,
            sigma: 1.0 / 3.0,
            nu: 2.0 / 3.0,
            xi: 0.0,
            custom: None,
        })
    }

    /// Cheng–Redner model kernels with homogeneity index `xi`:
    /// model I `(xy)^{ξ/2}`, model II `max(x, y)^ξ`, model III `min(x, y)^ξ`.
    /// The bound exponents σ, ν are derived from ξ.
    pub fn cheng_redner(family: CollisionFamily, k1: f64, xi: f64) -> Result<Self> {
        if !xi.is_finite() {
            return Err(Error::Parameter(format!("xi must be finite, got {xi}")));
        }
        let (sigma, nu) = match (family, xi <= 0.0) {
            (CollisionFamily::ChengRednerI, true) => (-0.5 * xi, 0.0),
            (CollisionFamily::ChengRednerI, false) => (0.0, 0.5 * xi),
            (CollisionFamily::ChengRednerII, true) => (-0.5 * xi, 0.0),
            (CollisionFamily::ChengRednerII, false) => (0.0, xi),
            (CollisionFamily::ChengRednerIII, true) => (-xi, -xi),
            (CollisionFamily::ChengRednerIII, false) => (0.0, 0.5 * xi),
            _ => {
                return Err(Error::Parameter(format!(
                    "{} is not a Cheng–Redner family",
                    family.preset_name()
                )))
            }
        };
        check_bound_params(k1, sigma, nu).map_err(|e| {
            Error::Parameter(format!("xi = {xi} is outside the admissible range for {}: {e}", family.preset_name()))
        })?;
        Ok(Self { family, k1, sigma, nu, xi, custom: None })
    }

    /// A user-supplied rate with declared bound parameters. Symmetry is not
    /// enforced; `verify_hypotheses` reports violations.
    pub fn custom(k1: f64, sigma: f64, nu: f64, rate: CollisionFn) -> Result<Self> {
        check_bound_params(k1, sigma, nu)?;
        Ok(Self { family: CollisionFamily::Custom, k1, sigma, nu, xi: 0.0, custom: Some(rate) })
    }

    pub fn family(&self) -> CollisionFamily {
        self.family
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        require_size("x", x)?;
        require_size("y", y)?;
        Ok(self.rate(x, y))
    }

    /// Unchecked evaluation. Built-in families sort their arguments first, so
    /// `rate(x, y)` and `rate(y, x)` are bitwise equal.
    pub(crate) fn rate(&self, x: f64, y: f64) -> f64 {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        match self.family {
            CollisionFamily::Constant => self.k1,
            CollisionFamily::SingularProduct => self.bound_sorted(a, b),
            CollisionFamily::Brownian => {
                let (ca, cb) = (a.cbrt(), b.cbrt());
                0.25 * self.k1 * (ca + cb) * (1.0 / ca + 1.0 / cb)
            }
            CollisionFamily::ChengRednerI => self.k1 * (a * b).powf(0.5 * self.xi),
            // max(x, y)^ξ; a tie takes the "otherwise" branch, which is the same value.
            CollisionFamily::ChengRednerII => self.k1 * b.powf(self.xi),
            CollisionFamily::ChengRednerIII => self.k1 * a.powf(self.xi),
            CollisionFamily::Custom => (self.custom.as_ref().expect("custom kernel without evaluator"))(x, y),
        }
    }

    /// `k1 (1+x)^ν (1+y)^ν (xy)^{-σ}`.
    pub fn bound(&self, x: f64, y: f64) -> f64 {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        self.bound_sorted(a, b)
    }

    fn bound_sorted(&self, a: f64, b: f64) -> f64 {
        let growth = if self.nu == 0.0 { 1.0 } else { ((1.0 + a) * (1.0 + b)).powf(self.nu) };
        let singular = if self.sigma == 0.0 { 1.0 } else { (a * b).powf(-self.sigma) };
        self.k1 * growth * singular
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_kernel_is_flat() {
        let c = CollisionKernel::constant(1.0).unwrap();
        assert_eq!(c.evaluate(0.3, 7.0).unwrap(), 1.0);
        assert_eq!(c.evaluate(1e-3, 1e3).unwrap(), 1.0);
    }

    #[test]
    fn singular_product_values() {
        let c = CollisionKernel::singular_product(1.0, 0.5, 0.0).unwrap();
        assert_eq!(c.evaluate(1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(c.evaluate(4.0, 1.0).unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn nonpositive_size_is_a_domain_error() {
        let c = CollisionKernel::constant(1.0).unwrap();
        assert!(matches!(c.evaluate(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(c.evaluate(1.0, -2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sigma_out_of_range_is_rejected() {
        let err = CollisionKernel::singular_product(1.0, 0.7, 0.0).unwrap_err();
        assert!(err.to_string().contains("sigma must lie in [0, 1/2]"));
    }

    #[test]
    fn cheng_redner_branches() {
        let m2 = CollisionKernel::cheng_redner(CollisionFamily::ChengRednerII, 1.0, -0.5).unwrap();
        assert_relative_eq!(m2.evaluate(4.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(m2.evaluate(1.0, 4.0).unwrap(), 0.5);
        let m3 = CollisionKernel::cheng_redner(CollisionFamily::ChengRednerIII, 1.0, -0.5).unwrap();
        assert_relative_eq!(m3.evaluate(4.0, 1.0).unwrap(), 1.0);
        assert_eq!((m3.sigma(), m3.nu()), (0.5, 0.5));
        assert!(CollisionKernel::cheng_redner(CollisionFamily::ChengRednerIII, 1.0, -0.8).is_err());
        assert!(CollisionKernel::cheng_redner(CollisionFamily::Constant, 1.0, 1.0).is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for f in CollisionFamily::PRESETS {
            assert_eq!(CollisionFamily::from_preset_name(f.preset_name()), Some(f));
        }
        assert_eq!(CollisionFamily::from_preset_name("nope"), None);
    }
}
