//! Cell-wise number density, its moments and weighted norms.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GeometricGrid;
use crate::quad;

/// `g(t, ·)` as one nonnegative density value per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    grid: Arc<GeometricGrid>,
    values: Vec<f64>,
    time: f64,
}

impl DensityState {
    pub fn zeros(grid: Arc<GeometricGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values, time: 0.0 }
    }

    pub fn from_values(grid: Arc<GeometricGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Contract(format!(
                "expected {} cell values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("density in cell {i} must be nonnegative and finite, got {v}")));
        }
        Ok(Self { grid, values, time })
    }

    pub fn grid(&self) -> &Arc<GeometricGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `N_p = Σ pivot^p · g · width` for `p > -1`.
    pub fn moment(&self, p: f64) -> Result<f64> {
        moment_of(&self.grid, &self.values, p)
    }

    pub fn weighted_norm(&self, params: &WeightedNormParams) -> f64 {
        params.norm_of(&self.grid, &self.values)
    }

    pub fn uniqueness_weight_norm(&self, params: &UniquenessParams) -> f64 {
        params.norm_of(&self.grid, &self.values)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Header row of the snapshot CSV: `time` then one column per pivot.
    pub fn csv_header(grid: &GeometricGrid) -> String {
        let mut out = String::from("time");
        for p in grid.pivots() {
            let _ = write!(out, ",{p:?}");
        }
        out
    }

    /// One CSV data row, shortest round-trip formatting.
    pub fn csv_row(&self) -> String {
        let mut out = format!("{:?}", self.time);
        for v in &self.values {
            let _ = write!(out, ",{v:?}");
        }
        out
    }
}

pub fn moment_of(grid: &GeometricGrid, values: &[f64], p: f64) -> Result<f64> {
    if !(p > -1.0) {
        return Err(Error::Domain(format!("moment order must exceed -1, got {p}")));
    }
    grid.quadrature(values, p)
}

/// Pivot sampling `g_i = g0(pivot_i)`.
pub fn init_from_function(grid: Arc<GeometricGrid>, g0: impl Fn(f64) -> f64) -> Result<DensityState> {
    let values = grid.pivots().iter().map(|&x| g0(x)).collect::<Vec<_>>();
    for (&x, &v) in grid.pivots().iter().zip(&values) {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("initial density must be nonnegative and finite, got g0({x}) = {v}")));
        }
    }
    Ok(DensityState { grid, values, time: 0.0 })
}

/// Mass projection: each cell carries `∫_cell x g0 dx`, so `N_1` equals the
/// continuous truncated mass exactly up to quadrature error.
pub fn init_mass_projection(grid: Arc<GeometricGrid>, g0: impl Fn(f64) -> f64) -> Result<DensityState> {
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (a, b, p) = grid.cell(i);
        let mass = quad::integrate(|x| x * g0(x), a, b, 4);
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(Error::Domain(format!("initial density has negative or non-finite mass on [{a}, {b}]")));
        }
        values.push(mass / (p * (b - a)));
    }
    Ok(DensityState { grid, values, time: 0.0 })
}

/// Parameters of `∫ (e^{λ(1+x)} + e^{2λ} x^{-r}) |g| dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormParams {
    lambda: f64,
    r: f64,
}

impl WeightedNormParams {
    pub fn new(lambda: f64, r: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Parameter(format!("r must lie in (0, 1), got {r}")));
        }
        Ok(Self { lambda, r })
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn weight(&self, x: f64) -> f64 {
        (self.lambda * (1.0 + x)).exp() + (2.0 * self.lambda).exp() * x.powf(-self.r)
    }
    pub fn weights(&self, grid: &GeometricGrid) -> Vec<f64> {
        grid.pivots().iter().zip(grid.widths()).map(|(&x, &w)| self.weight(x) * w).collect()
    }
    /// Norm of a possibly signed cell vector.
    pub fn norm_of(&self, grid: &GeometricGrid, values: &[f64]) -> f64 {
        grid.pivots()
            .iter()
            .zip(grid.widths())
            .zip(values)
            .map(|((&x, &w), &v)| self.weight(x) * v.abs() * w)
            .sum()
    }
}

/// Parameters of the uniqueness weight `e^{λx} + x^{-θ}`, admissible when
/// `θ + σ < 1` for the collision singularity `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessParams {
    lambda: f64,
    theta: f64,
}

impl UniquenessParams {
    pub fn new(lambda: f64, theta: f64, sigma: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !(theta >= 0.0) {
            return Err(Error::Parameter(format!("theta must be nonnegative, got {theta}")));
        }
        if !(theta + sigma < 1.0) {
            return Err(Error::Parameter(format!(
                "theta + sigma must be below 1, got theta = {theta}, sigma = {sigma}"
            )));
        }
        Ok(Self { lambda, theta })
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn weight(&self, x: f64) -> f64 {
        (self.lambda * x).exp() + x.powf(-self.theta)
    }
    pub fn norm_of(&self, grid: &GeometricGrid, values: &[f64]) -> f64 {
        grid.pivots()
            .iter()
            .zip(grid.widths())
            .zip(values)
            .map(|((&x, &w), &v)| self.weight(x) * v.abs() * w)
            .sum()
    }
}

pub fn weighted_norm(state: &DensityState, params: &WeightedNormParams) -> f64 {
    state.weighted_norm(params)
}

pub fn uniqueness_weight_norm(state: &DensityState, params: &UniquenessParams) -> f64 {
    state.uniqueness_weight_norm(params)
}

/// Initial-data presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// `e^{-a x}`.
    Exp { rate: f64 },
    /// All particles in the cell containing `size`.
    Monodisperse { size: f64 },
    /// `x^{-exponent} e^{-x / cutoff}`.
    PowerlawCutoff { exponent: f64, cutoff: f64 },
}

impl InitialProfile {
    pub fn preset_name(&self) -> &'static str {
        match self {
            InitialProfile::Exp { .. } => "exp",
            InitialProfile::Monodisperse { .. } => "monodisperse",
            InitialProfile::PowerlawCutoff { .. } => "powerlaw-cutoff",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitialProfile::Exp { rate } if !(rate >= 0.0) => {
                Err(Error::Parameter(format!("exp rate must be nonnegative, got {rate}")))
            }
            InitialProfile::Monodisperse { size } if !(size > 0.0) => {
                Err(Error::Parameter(format!("monodisperse size must be positive, got {size}")))
            }
            InitialProfile::PowerlawCutoff { cutoff, exponent } if !(cutoff > 0.0) || !exponent.is_finite() => Err(
                Error::Parameter(format!("powerlaw-cutoff needs cutoff > 0, got {cutoff}")),
            ),
            _ => Ok(()),
        }
    }

    /// Pointwise density, or `None` for the spike.
    pub fn density(&self) -> Option<impl Fn(f64) -> f64 + Copy> {
        let p = *self;
        match p {
            InitialProfile::Monodisperse { .. } => None,
            _ => Some(move |x: f64| match p {
                InitialProfile::Exp { rate } => (-rate * x).exp(),
                InitialProfile::PowerlawCutoff { exponent, cutoff } => x.powf(-exponent) * (-x / cutoff).exp(),
                InitialProfile::Monodisperse { .. } => 0.0,
            }),
        }
    }

    /// Discretize on `grid`, by pivot sampling or mass projection, then
    /// apply `normalization`.
    pub fn build(
        &self,
        grid: Arc<GeometricGrid>,
        sampling: Sampling,
        normalization: Normalization,
    ) -> Result<DensityState> {
        self.validate()?;
        let mut state = match (self, self.density()) {
            (InitialProfile::Monodisperse { size }, _) => {
                let j = grid.locate_cell(*size)?;
                let mut values = vec![0.0; grid.len()];
                values[j] = 1.0 / grid.widths()[j];
                DensityState { grid, values, time: 0.0 }
            }
            (_, Some(f)) => match sampling {
                Sampling::Pivot => init_from_function(grid, f)?,
                Sampling::MassProjection => init_mass_projection(grid, f)?,
            },
            (_, None) => unreachable!(),
        };
        normalization.apply(&mut state)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    #[default]
    Pivot,
    MassProjection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    None,
    /// Scale so that `N_0` equals the target.
    Number(f64),
    /// Scale so that `N_1` equals the target.
    Mass(f64),
}

impl Normalization {
    pub fn apply(&self, state: &mut DensityState) -> Result<()> {
        let (p, target) = match *self {
            Normalization::None => return Ok(()),
            Normalization::Number(t) => (0.0, t),
            Normalization::Mass(t) => (1.0, t),
        };
        if !(target >= 0.0) || !target.is_finite() {
            return Err(Error::Parameter(format!("normalization target must be nonnegative, got {target}")));
        }
        let current = state.moment(p)?;
        if current == 0.0 {
            return Err(Error::Domain("cannot normalize an initial profile that vanishes on the grid".into()));
        }
        state.scale(target / current);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::grid::build_grid;

    fn grid(n: f64, cpd: usize) -> Arc<GeometricGrid> {
        Arc::new(build_grid(n, cpd).unwrap())
    }

    fn unit_cell() -> Arc<GeometricGrid> {
        // Two cells on [1/2, 2]: the upper one is [1, 2].
        let g = grid(2.0, 1);
        assert_eq!(g.len(), 2);
        assert_relative_eq!(g.edges()[1], 1.0, max_relative = 1e-15);
        g
    }

    #[test]
    fn zero_state_has_zero_moments_and_norms() {
        let s = DensityState::zeros(grid(8.0, 8));
        for p in [-0.5, 0.0, 1.0, 2.0] {
            assert_eq!(s.moment(p).unwrap(), 0.0);
        }
        assert_eq!(s.weighted_norm(&WeightedNormParams::new(1.0, 0.5).unwrap()), 0.0);
        assert_eq!(s.uniqueness_weight_norm(&UniquenessParams::new(1.0, 0.2, 0.5).unwrap()), 0.0);
    }

    #[test]
    fn exp_initial_mass() {
        // ∫_{1/8}^8 x e^{-x} dx = (1 + 1/8) e^{-1/8} - 9 e^{-8}.
        let exact = 1.125 * (-0.125f64).exp() - 9.0 * (-8.0f64).exp();
        let oracle = crate::quad::integrate(|x| x * (-x).exp(), 0.125, 8.0, 200);
        assert_relative_eq!(exact, oracle, max_relative = 1e-13);
        assert_relative_eq!(exact, 0.989_789_851_756_547, max_relative = 1e-13);
        let s = init_from_function(grid(8.0, 32), |x| (-x).exp()).unwrap();
        assert_relative_eq!(s.moment(1.0).unwrap(), exact, max_relative = 1e-3);
        let ratio = s.moment(0.0).unwrap() / s.moment(1.0).unwrap();
        let n0 = (-0.125f64).exp() - (-8.0f64).exp();
        assert_relative_eq!(ratio, n0 / exact, max_relative = 1e-3);
        let projected = init_mass_projection(grid(8.0, 32), |x| (-x).exp()).unwrap();
        assert_relative_eq!(projected.moment(1.0).unwrap(), exact, max_relative = 1e-12);
    }

    #[test]
    fn pivot_sampling_is_pointwise() {
        let g = grid(8.0, 4);
        let s = init_from_function(g.clone(), |x| x.powi(-2)).unwrap();
        for (&p, &v) in g.pivots().iter().zip(s.values()) {
            assert_eq!(v, p.powi(-2));
        }
        assert!(matches!(init_from_function(g, |x| 1.0 - x), Err(Error::Domain(_))));
    }

    #[test]
    fn single_cell_arithmetic() {
        let g = unit_cell();
        let s = DensityState::from_values(g, vec![0.0, 1.0], 0.0).unwrap();
        assert_relative_eq!(s.moment(1.0).unwrap(), 2f64.sqrt(), max_relative = 1e-14);
        let norm = s.weighted_norm(&WeightedNormParams::new(1.0, 0.5).unwrap());
        let expected = (1.0 + 2f64.sqrt()).exp() + 2f64.exp() * 2f64.powf(-0.25);
        assert_relative_eq!(norm, expected, max_relative = 1e-14);
        let u = s.uniqueness_weight_norm(&UniquenessParams::new(1.0, 0.25, 0.5).unwrap());
        assert_relative_eq!(u, 2f64.sqrt().exp() + 2f64.powf(-0.125), max_relative = 1e-14);
    }

    #[test]
    fn weight_limits() {
        let s = init_from_function(grid(4.0, 8), |x| (-x).exp()).unwrap();
        let small = s.weighted_norm(&WeightedNormParams::new(1e-12, 0.4).unwrap());
        let limit = s.moment(0.0).unwrap() + s.moment(-0.4).unwrap();
        assert_relative_eq!(small, limit, max_relative = 1e-9);
        let u = s.uniqueness_weight_norm(&UniquenessParams::new(0.0, 0.0, 0.5).unwrap());
        assert_relative_eq!(u, 2.0 * s.moment(0.0).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn parameter_validation() {
        assert!(WeightedNormParams::new(0.0, 0.5).is_err());
        assert!(WeightedNormParams::new(1.0, 1.0).is_err());
        assert!(matches!(UniquenessParams::new(1.0, 0.5, 0.5), Err(Error::Parameter(_))));
        let s = DensityState::zeros(grid(4.0, 4));
        assert!(matches!(s.moment(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn presets_and_normalization() {
        let g = grid(8.0, 16);
        let s = InitialProfile::Exp { rate: 1.0 }.build(g.clone(), Sampling::Pivot, Normalization::Number(1.0)).unwrap();
        assert_relative_eq!(s.moment(0.0).unwrap(), 1.0, max_relative = 1e-14);
        let m = InitialProfile::Monodisperse { size: 2.0 }
            .build(g.clone(), Sampling::Pivot, Normalization::Mass(3.0))
            .unwrap();
        assert_eq!(m.values().iter().filter(|v| **v > 0.0).count(), 1);
        assert_relative_eq!(m.moment(1.0).unwrap(), 3.0, max_relative = 1e-14);
        let pc = InitialProfile::PowerlawCutoff { exponent: 0.5, cutoff: 2.0 }
            .build(g, Sampling::MassProjection, Normalization::None)
            .unwrap();
        assert!(pc.values().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn csv_round_trips_values() {
        let s = init_from_function(grid(2.0, 2), |x| (-x).exp()).unwrap();
        let header = DensityState::csv_header(s.grid());
        let row = s.csv_row();
        assert_eq!(header.split(',').count(), row.split(',').count());
        let parsed: Vec<f64> = row.split(',').skip(1).map(|t| t.parse().unwrap()).collect();
        assert_eq!(parsed, s.values());
    }

    proptest! {
        #[test]
        fn norm_monotone_in_lambda(vals in prop::collection::vec(0.0f64..5.0, 5), l1 in 0.01f64..2.0, dl in 0.0f64..2.0) {
            let g = grid(2.0, 8);
            prop_assert_eq!(g.len(), vals.len());
            let s = DensityState::from_values(g, vals, 0.0).unwrap();
            let a = s.weighted_norm(&WeightedNormParams::new(l1, 0.5).unwrap());
            let b = s.weighted_norm(&WeightedNormParams::new(l1 + dl, 0.5).unwrap());
            prop_assert!(a <= b);
        }

        #[test]
        fn triangle_inequality_and_linearity(
            a in prop::collection::vec(-5.0f64..5.0, 5),
            b in prop::collection::vec(-5.0f64..5.0, 5),
            c in -3.0f64..3.0,
        ) {
            let g = grid(2.0, 8);
            prop_assert_eq!(g.len(), a.len());
            let params = WeightedNormParams::new(0.7, 0.3).unwrap();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = params.norm_of(&g, &sum);
            let rhs = params.norm_of(&g, &a) + params.norm_of(&g, &b);
            prop_assert!(lhs <= rhs * (1.0 + 1e-14));
            let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
            let m_scaled = moment_of(&g, &scaled, 1.5).unwrap();
            let m = moment_of(&g, &a, 1.5).unwrap();
            prop_assert!((m_scaled - c * m).abs() <= 1e-12 * (1.0 + m.abs() * c.abs()));
        }
    }
}
