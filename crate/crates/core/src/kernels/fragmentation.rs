use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{require_size, Error, Result};
use crate::quad;

pub type FragmentationFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

const QUAD_TOL: f64 = 1e-15;

/// Which cluster of a colliding pair breaks in a half-split event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    /// Both clusters break (Cheng–Redner model I).
    Always,
    /// The mother breaks only when it is the larger one (`z ≤ y`, model II).
    LargerBreaks,
    /// The mother breaks only when it is the smaller one (`y ≤ z`, model III).
    SmallerBreaks,
}

impl SplitRule {
    pub fn name(self) -> &'static str {
        match self {
            SplitRule::Always => "always",
            SplitRule::LargerBreaks => "larger",
            SplitRule::SmallerBreaks => "smaller",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [SplitRule::Always, SplitRule::LargerBreaks, SplitRule::SmallerBreaks]
            .into_iter()
            .find(|r| r.name() == name)
    }

    /// Whether a mother of size `y` hit by `z` splits; otherwise it survives
    /// intact (`δ(x - y)`).
    pub fn breaks(self, y: f64, z: f64) -> bool {
        match self {
            SplitRule::Always => true,
            SplitRule::LargerBreaks => z <= y,
            SplitRule::SmallerBreaks => y <= z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum FragmentationFamily {
    /// `F(x, y | z) = (α+2) x^α / y^{α+1}` on `0 < x ≤ y`.
    Powerlaw { alpha: f64 },
    /// `2 δ(x - y/2)` when the rule says the mother breaks, `δ(x - y)` otherwise.
    HalfSplit { rule: SplitRule },
    Custom,
}

impl FragmentationFamily {
    pub fn preset_name(&self) -> &'static str {
        match self {
            FragmentationFamily::Powerlaw { .. } => "powerlaw",
            FragmentationFamily::HalfSplit { .. } => "half-split",
            FragmentationFamily::Custom => "custom",
        }
    }
}

/// Breakage distribution with its `k2 / y^β` bound parameters.
#[derive(Clone)]
pub struct FragmentationKernel {
    family: FragmentationFamily,
    k2: f64,
    beta: f64,
    theta_max: f64,
    valid_domain: Option<(f64, f64)>,
    custom: Option<FragmentationFn>,
    partner_dependent: bool,
}

impl fmt::Debug for FragmentationKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FragmentationKernel")
            .field("family", &self.family)
            .field("k2", &self.k2)
            .field("beta", &self.beta)
            .field("theta_max", &self.theta_max)
            .field("valid_domain", &self.valid_domain)
            .finish_non_exhaustive()
    }
}

/// Smallest `k2` with `(α+2) x^α / y^{α+1} ≤ k2 / y^β` for
/// `1/n ≤ x ≤ y ≤ n`. The product is monotone in each variable, so the
/// supremum sits on a corner of the triangle.
pub fn powerlaw_bound_constant(alpha: f64, beta: f64, n: f64) -> f64 {
    let g = |x: f64, y: f64| (alpha + 2.0) * x.powf(alpha) * y.powf(beta - alpha - 1.0);
    let lo = 1.0 / n;
    g(lo, lo).max(g(lo, n)).max(g(n, n))
}

fn check_common(k2: f64, beta: f64, theta_max: f64) -> Result<()> {
    if !(k2 >= 0.0 && k2.is_finite()) {
        return Err(Error::Parameter(format!("k2 must be a nonnegative finite constant, got {k2}")));
    }
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::Parameter(format!("beta must lie in (0, 1/2], got {beta}")));
    }
    if !(theta_max > 0.0 && theta_max.is_finite()) {
        return Err(Error::Parameter(format!("theta_max must be positive and finite, got {theta_max}")));
    }
    Ok(())
}

impl FragmentationKernel {
    /// Power-law family with `k2` chosen as the exact `k2 / y^β` constant on
    /// `[1/n, n]`; that domain is recorded as the bound's domain of validity.
    pub fn powerlaw(alpha: f64, beta: f64, n: f64) -> Result<Self> {
        if !(n > 1.0 && n.is_finite()) {
            return Err(Error::Domain(format!("truncation index must exceed 1, got {n}")));
        }
        let k2 = powerlaw_bound_constant(alpha, beta, n);
        let mut kernel = Self::powerlaw_with(alpha, k2, beta, (alpha + 2.0) / (alpha + 1.0))?;
        kernel.valid_domain = Some((1.0 / n, n));
        Ok(kernel)
    }

    pub fn powerlaw_with(alpha: f64, k2: f64, beta: f64, theta_max: f64) -> Result<Self> {
        if !(alpha > -1.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must exceed -1, got {alpha}")));
        }
        check_common(k2, beta, theta_max)?;
        Ok(Self {
            family: FragmentationFamily::Powerlaw { alpha },
            k2,
            beta,
            theta_max,
            valid_domain: None,
            custom: None,
            partner_dependent: false,
        })
    }

    /// Half-split delta kernel. `k2` and `beta` only feed the contraction
    /// estimate; a delta has no pointwise `k2 / y^β` bound.
    pub fn half_split(rule: SplitRule, k2: f64, beta: f64) -> Result<Self> {
        check_common(k2, beta, 2.0)?;
        Ok(Self {
            family: FragmentationFamily::HalfSplit { rule },
            k2,
            beta,
            theta_max: 2.0,
            valid_domain: None,
            custom: None,
            partner_dependent: rule != SplitRule::Always,
        })
    }

    /// User-supplied density. `partner_dependent = false` promises that the
    /// value does not depend on `z`, which lets the solver share one weight
    /// table per mother.
    pub fn custom(
        density: FragmentationFn,
        k2: f64,
        beta: f64,
        theta_max: f64,
        partner_dependent: bool,
    ) -> Result<Self> {
        check_common(k2, beta, theta_max)?;
        Ok(Self {
            family: FragmentationFamily::Custom,
            k2,
            beta,
            theta_max,
            valid_domain: None,
            custom: Some(density),
            partner_dependent,
        })
    }

    pub fn family(&self) -> FragmentationFamily {
        self.family
    }
    pub fn k2(&self) -> f64 {
        self.k2
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }
    pub fn valid_domain(&self) -> Option<(f64, f64)> {
        self.valid_domain
    }
    pub fn partner_dependent(&self) -> bool {
        self.partner_dependent
    }
    pub fn is_delta(&self) -> bool {
        matches!(self.family, FragmentationFamily::HalfSplit { .. })
    }

    pub fn evaluate(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        require_size("x", x)?;
        require_size("y", y)?;
        require_size("z", z)?;
        if self.is_delta() {
            return Err(Error::Unsupported(
                "half-split kernels are distributions; use the discretized fragment weights".into(),
            ));
        }
        Ok(self.density(x, y, z))
    }

    /// Pointwise density for non-delta families; zero above the mother size.
    pub(crate) fn density(&self, x: f64, y: f64, z: f64) -> f64 {
        if x > y {
            return 0.0;
        }
        match self.family {
            FragmentationFamily::Powerlaw { alpha } => (alpha + 2.0) * x.powf(alpha) / y.powf(alpha + 1.0),
            FragmentationFamily::Custom => (self.custom.as_ref().expect("custom kernel without density"))(x, y, z),
            FragmentationFamily::HalfSplit { .. } => unreachable!("delta kernels have no density"),
        }
    }

    pub fn fragment_count(&self, y: f64, z: f64) -> Result<f64> {
        require_size("y", y)?;
        require_size("z", z)?;
        match self.family {
            FragmentationFamily::Powerlaw { alpha } => Ok((alpha + 2.0) / (alpha + 1.0)),
            FragmentationFamily::HalfSplit { rule } => Ok(if rule.breaks(y, z) { 2.0 } else { 1.0 }),
            FragmentationFamily::Custom => self.count_by_quadrature(y, z),
        }
    }

    /// `∫_0^y x F dx`, in closed form where available.
    pub fn mass_moment(&self, y: f64, z: f64) -> Result<f64> {
        require_size("y", y)?;
        require_size("z", z)?;
        match self.family {
            FragmentationFamily::Powerlaw { .. } | FragmentationFamily::HalfSplit { .. } => Ok(y),
            FragmentationFamily::Custom => self.mass_by_quadrature(y, z),
        }
    }

    /// Generic quadrature route for `∫_0^y x F dx`; valid for any
    /// non-delta family.
    pub fn mass_by_quadrature(&self, y: f64, z: f64) -> Result<f64> {
        self.require_pointwise()?;
        quad::integrate_from_zero(|x| x * self.density(x, y, z), y, QUAD_TOL)
    }

    /// Generic quadrature route for `∫_0^y F dx`.
    pub fn count_by_quadrature(&self, y: f64, z: f64) -> Result<f64> {
        self.require_pointwise()?;
        quad::integrate_from_zero(|x| self.density(x, y, z), y, QUAD_TOL)
            .map_err(|e| Error::Model(format!("fragment count θ({y}, {z}) is not finite: {e}")))
    }

    /// `(∫_a^b F dx, ∫_a^b x F dx)` over `[a, b] ∩ (0, y]`.
    pub(crate) fn partial_moments(&self, y: f64, z: f64, a: f64, b: f64) -> Result<(f64, f64)> {
        let b = b.min(y);
        if b <= a {
            return Ok((0.0, 0.0));
        }
        match self.family {
            FragmentationFamily::Powerlaw { alpha } => {
                let c = (alpha + 2.0) / y.powf(alpha + 1.0);
                let e0 = alpha + 1.0;
                let e1 = alpha + 2.0;
                let a0 = if a > 0.0 { a.powf(e0) } else { 0.0 };
                let a1 = if a > 0.0 { a.powf(e1) } else { 0.0 };
                Ok((c * (b.powf(e0) - a0) / e0, c * (b.powf(e1) - a1) / e1))
            }
            FragmentationFamily::Custom => {
                if a <= 0.0 {
                    let n0 = quad::integrate_from_zero(|x| self.density(x, y, z), b, QUAD_TOL)?;
                    let n1 = quad::integrate_from_zero(|x| x * self.density(x, y, z), b, QUAD_TOL)?;
                    Ok((n0, n1))
                } else {
                    Ok((
                        quad::integrate(|x| self.density(x, y, z), a, b, 4),
                        quad::integrate(|x| x * self.density(x, y, z), a, b, 4),
                    ))
                }
            }
            FragmentationFamily::HalfSplit { .. } => Err(Error::Unsupported(
                "half-split kernels have no partial moments".into(),
            )),
        }
    }

    fn require_pointwise(&self) -> Result<()> {
        if self.is_delta() {
            Err(Error::Unsupported("delta kernels cannot be integrated pointwise".into()))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn powerlaw_values() {
        let f0 = FragmentationKernel::powerlaw_with(0.0, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(f0.evaluate(1.0, 2.0, 5.0).unwrap(), 1.0);
        assert_eq!(f0.evaluate(3.0, 2.0, 5.0).unwrap(), 0.0);
        let f1 = FragmentationKernel::powerlaw_with(1.0, 1.0, 0.5, 1.5).unwrap();
        assert_relative_eq!(f1.evaluate(0.5, 1.0, 1.0).unwrap(), 1.5);
    }

    #[test]
    fn counts() {
        let f0 = FragmentationKernel::powerlaw_with(0.0, 1.0, 0.5, 2.0).unwrap();
        assert_eq!(f0.fragment_count(3.0, 0.2).unwrap(), 2.0);
        let f1 = FragmentationKernel::powerlaw_with(1.0, 1.0, 0.5, 1.5).unwrap();
        assert_eq!(f1.fragment_count(0.7, 9.0).unwrap(), 1.5);
        let h = FragmentationKernel::half_split(SplitRule::Always, 1.0, 0.5).unwrap();
        assert_eq!(h.fragment_count(0.7, 9.0).unwrap(), 2.0);
        let h2 = FragmentationKernel::half_split(SplitRule::LargerBreaks, 1.0, 0.5).unwrap();
        assert_eq!(h2.fragment_count(0.7, 9.0).unwrap(), 1.0);
        assert_eq!(h2.fragment_count(9.0, 0.7).unwrap(), 2.0);
    }

    #[test]
    fn delta_pointwise_evaluation_is_unsupported() {
        let h = FragmentationKernel::half_split(SplitRule::Always, 1.0, 0.5).unwrap();
        assert!(matches!(h.evaluate(0.5, 1.0, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn bound_constant_for_uniform_daughters() {
        assert_relative_eq!(powerlaw_bound_constant(0.0, 0.5, 8.0), 2.0 * 8f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn divergent_custom_count_is_a_model_error() {
        let f = FragmentationKernel::custom(Arc::new(|x, y, _| y / (x * x)), 1.0, 0.5, 2.0, false).unwrap();
        assert!(matches!(f.fragment_count(1.0, 1.0), Err(Error::Model(_))));
    }

    #[test]
    fn custom_quadrature_matches_closed_form() {
        let f = FragmentationKernel::custom(
            Arc::new(|x, y, _| 1.5 * x.powf(-0.5) / y.powf(0.5)),
            1.0,
            0.5,
            3.0,
            false,
        )
        .unwrap();
        assert_relative_eq!(f.fragment_count(2.0, 1.0).unwrap(), 3.0, max_relative = 1e-10);
        assert_relative_eq!(f.mass_moment(2.0, 1.0).unwrap(), 2.0, max_relative = 1e-10);
    }
}
