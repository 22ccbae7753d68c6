//! The fixed-point operator in survival-factor form and its slab iteration.
//!
//! On a slab `[t_s, t_s + h]` with collocation times `τ_k`, the operator is
//!
//! `𝒞(g)_k = g_s e^{−D_k} + h Σ_m S_km e^{−(D_k − D_m)} gain_m`,
//! `D_k = h Σ_m S_km d_m`,
//!
//! where `S_km = ∫_0^{τ_k} ℓ_m` integrates the interpolant through the
//! nodes and `d`, `gain` are the death and gain rates of `g` at each node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::quad::gauss_legendre;
use crate::solver::rhs::{DiscreteModel, Rates};
use crate::state::WeightedNormParams;

/// Quadrature in time inside a slab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TimeRule {
    /// Composite trapezoid on equal sub-steps (second order).
    Trapezoid { substeps: usize },
    /// Polynomial collocation at Chebyshev–Lobatto points.
    ChebyshevLobatto { nodes: usize },
}

impl Default for TimeRule {
    fn default() -> Self {
        TimeRule::ChebyshevLobatto { nodes: 16 }
    }
}

impl TimeRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeRule::Trapezoid { substeps: 0 } => {
                Err(Error::Parameter("trapezoid rule needs at least one sub-step".into()))
            }
            TimeRule::ChebyshevLobatto { nodes } if nodes < 2 => {
                Err(Error::Parameter("Chebyshev–Lobatto rule needs at least two nodes".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn matrix(&self) -> Result<SlabQuadrature> {
        self.validate()?;
        Ok(match *self {
            TimeRule::Trapezoid { substeps } => SlabQuadrature::trapezoid(substeps),
            TimeRule::ChebyshevLobatto { nodes } => SlabQuadrature::chebyshev_lobatto(nodes),
        })
    }
}

/// Nodes on `[0, 1]` and the cumulative integration matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabQuadrature {
    nodes: Vec<f64>,
    s: Vec<f64>,
}

impl SlabQuadrature {
    fn trapezoid(substeps: usize) -> Self {
        let k = substeps;
        let dt = 1.0 / k as f64;
        let nodes = (0..=k).map(|i| i as f64 * dt).collect();
        let mut s = vec![0.0; (k + 1) * (k + 1)];
        for row in 1..=k {
            for col in 0..=k {
                s[row * (k + 1) + col] = s[(row - 1) * (k + 1) + col];
            }
            s[row * (k + 1) + row - 1] += 0.5 * dt;
            s[row * (k + 1) + row] += 0.5 * dt;
        }
        Self { nodes, s }
    }

    fn chebyshev_lobatto(points: usize) -> Self {
        let k = points - 1;
        let nodes: Vec<f64> = (0..=k)
            .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / k as f64).cos()))
            .collect();
        let bary: Vec<f64> = (0..=k)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == k { 0.5 * sign } else { sign }
            })
            .collect();
        let rule = gauss_legendre(points.max(2));
        let basis = |t: f64| -> Vec<f64> {
            if let Some(hit) = nodes.iter().position(|&x| x == t) {
                let mut out = vec![0.0; k + 1];
                out[hit] = 1.0;
                return out;
            }
            let terms: Vec<f64> = nodes.iter().zip(&bary).map(|(&x, &w)| w / (t - x)).collect();
            let denom: f64 = terms.iter().sum();
            terms.into_iter().map(|v| v / denom).collect()
        };
        let mut s = vec![0.0; (k + 1) * (k + 1)];
        for row in 1..=k {
            let upper = nodes[row];
            for &(x, w) in &rule {
                let t = 0.5 * upper * (x + 1.0);
                for (col, l) in basis(t).into_iter().enumerate() {
                    s[row * (k + 1) + col] += 0.5 * upper * w * l;
                }
            }
        }
        Self { nodes, s }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    /// `∫_0^{τ_row} ℓ_col`.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.s[row * self.len() + col]
    }
    fn row(&self, row: usize) -> &[f64] {
        let k = self.len();
        &self.s[row * k..(row + 1) * k]
    }
}

/// Rates of every node of a slab iterate.
struct NodeRates {
    death: Vec<Vec<f64>>,
    gain: Vec<Vec<f64>>,
    loss: Vec<f64>,
}

fn node_rates(model: &DiscreteModel, iterate: &[Vec<f64>], ws: &mut Rates) -> NodeRates {
    let mut out = NodeRates { death: Vec::new(), gain: Vec::new(), loss: Vec::new() };
    for g in iterate {
        model.rates_into(g, ws);
        out.death.push(ws.death.clone());
        out.gain.push(ws.gain.clone());
        out.loss.push(ws.loss);
    }
    out
}

/// One application of the operator. Returns the new node values and the
/// number of negative entries set to zero.
fn apply_with(
    model: &DiscreteModel,
    g_start: &[f64],
    rates: &NodeRates,
    h: f64,
    quad: &SlabQuadrature,
) -> (Vec<Vec<f64>>, usize) {
    let kn = quad.len();
    let n = g_start.len();
    // Cell-major evaluation keeps each cell's sums in a fixed order.
    let per_cell: Vec<Vec<f64>> = par::map_range(model.exec(), n, |i| {
        let d: Vec<f64> = (0..kn)
            .map(|k| h * quad.row(k).iter().zip(&rates.death).map(|(s, dm)| s * dm[i]).sum::<f64>())
            .collect();
        (0..kn)
            .map(|k| {
                let mut integral = 0.0;
                for (m, s) in quad.row(k).iter().enumerate() {
                    if *s != 0.0 {
                        integral += s * (d[m] - d[k]).exp() * rates.gain[m][i];
                    }
                }
                g_start[i] * (-d[k]).exp() + h * integral
            })
            .collect()
    });
    let mut clamps = 0;
    let mut out = vec![vec![0.0; n]; kn];
    for (i, column) in per_cell.into_iter().enumerate() {
        for (k, v) in column.into_iter().enumerate() {
            out[k][i] = if v < 0.0 {
                clamps += 1;
                0.0
            } else {
                v
            };
        }
    }
    (out, clamps)
}

/// `𝒞(g)` for a slab iterate given at the nodes of `quad`.
pub fn apply_operator(
    model: &DiscreteModel,
    g_start: &[f64],
    iterate: &[Vec<f64>],
    h: f64,
    quad: &SlabQuadrature,
) -> Vec<Vec<f64>> {
    let mut ws = Rates::default();
    let rates = node_rates(model, iterate, &mut ws);
    apply_with(model, g_start, &rates, h, quad).0
}

/// Sup over nodes of the weighted norm of a signed slab function.
pub fn slab_norm(model: &DiscreteModel, norm: &WeightedNormParams, values: &[Vec<f64>]) -> f64 {
    values.iter().map(|g| norm.norm_of(model.grid(), g)).fold(0.0, f64::max)
}

fn slab_distance(model: &DiscreteModel, norm: &WeightedNormParams, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff: Vec<f64> = x.iter().zip(y).map(|(u, v)| u - v).collect();
            norm.norm_of(model.grid(), &diff)
        })
        .fold(0.0, f64::max)
}

/// Stopping and bookkeeping options for one slab.
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    /// Stop when the iterate difference falls below `tol` times the iterate norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Contraction factor used for the predicted bound in convergence errors.
    pub k_hint: Option<f64>,
}

/// Result of one converged slab.
#[derive(Debug, Clone)]
pub struct SlabOutcome {
    /// Density at the slab end.
    pub end: Vec<f64>,
    /// All node values of the converged iterate.
    pub nodes: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Successive weighted-norm differences `‖g_α − g_{α−1}‖`.
    pub differences: Vec<f64>,
    /// Ratios of successive differences above the round-off floor.
    pub ratios: Vec<f64>,
    pub max_iterate_norm: f64,
    pub clamps: usize,
    /// Mass that left the grid during the slab.
    pub lost_mass: f64,
}

impl SlabOutcome {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Iterate the operator on one slab of length `h` starting from `g_start`.
pub fn picard_slab(
    model: &DiscreteModel,
    g_start: &[f64],
    h: f64,
    quad: &SlabQuadrature,
    norm: &WeightedNormParams,
    opts: PicardOptions,
) -> Result<SlabOutcome> {
    let kn = quad.len();
    let mut iterate = vec![g_start.to_vec(); kn];
    let mut ws = Rates::default();
    let mut differences = Vec::new();
    let mut ratios = Vec::new();
    let mut max_norm = slab_norm(model, norm, &iterate);
    let mut clamps = 0;
    for it in 1..=opts.max_iter {
        let rates = node_rates(model, &iterate, &mut ws);
        let (next, c) = apply_with(model, g_start, &rates, h, quad);
        clamps += c;
        let diff = slab_distance(model, norm, &next, &iterate);
        let size = slab_norm(model, norm, &next);
        max_norm = max_norm.max(size);
        if let Some(&prev) = differences.last() {
            if prev > 1e-12 * size {
                ratios.push(diff / prev);
            }
        }
        differences.push(diff);
        iterate = next;
        if diff <= opts.tol * size || diff == 0.0 {
            let final_rates = node_rates(model, &iterate, &mut ws);
            let lost_mass = h * quad.row(kn - 1).iter().zip(&final_rates.loss).map(|(s, l)| s * l).sum::<f64>();
            return Ok(SlabOutcome {
                end: iterate[kn - 1].clone(),
                nodes: iterate,
                iterations: it,
                differences,
                ratios,
                max_iterate_norm: max_norm,
                clamps,
                lost_mass,
            });
        }
    }
    let last = differences.last().copied().unwrap_or(f64::NAN);
    let first = differences.first().copied().unwrap_or(f64::NAN);
    let predicted = opts.k_hint.map_or(f64::NAN, |k| k.powi(opts.max_iter as i32 - 1) * first);
    Err(Error::Convergence { iterations: opts.max_iter, last_difference: last, predicted_bound: predicted })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_relative_eq;

    use super::*;
    use crate::grid::build_grid;
    use crate::kernels::{CollisionKernel, FragmentationKernel};
    use crate::par::ExecMode;
    use crate::solver::truncation::TruncatedKernel;

    fn opts() -> PicardOptions {
        PicardOptions { tol: 1e-13, max_iter: 200, k_hint: None }
    }

    #[test]
    fn integration_matrices_integrate_polynomials() {
        let cheb = TimeRule::ChebyshevLobatto { nodes: 9 }.matrix().unwrap();
        for row in 0..cheb.len() {
            let t = cheb.nodes()[row];
            for p in 0..8 {
                let got: f64 = (0..cheb.len()).map(|c| cheb.weight(row, c) * cheb.nodes()[c].powi(p)).sum();
                assert_relative_eq!(got, t.powi(p + 1) / (p + 1) as f64, epsilon = 1e-14);
            }
        }
        let trap = TimeRule::Trapezoid { substeps: 4 }.matrix().unwrap();
        let last: f64 = (0..5).map(|c| trap.weight(4, c) * trap.nodes()[c]).sum();
        assert_relative_eq!(last, 0.5, epsilon = 1e-15);
        assert!(TimeRule::Trapezoid { substeps: 0 }.matrix().is_err());
    }

    fn single_cell_death_model(c: f64) -> DiscreteModel {
        // Two cells; state supported on the lower one, with a kernel that
        // only acts there through the constant rate.
        let grid = Arc::new(build_grid(2.0, 1).unwrap());
        let kernel = TruncatedKernel::new(CollisionKernel::constant(c).unwrap(), 2.0, 0.5).unwrap();
        // Zero fragmentation kernel: no daughters anywhere.
        let f = FragmentationKernel::custom(Arc::new(|_, _, _| 0.0), 1.0, 0.25, 1.0, false).unwrap();
        DiscreteModel::new(grid, kernel, f, ExecMode::Sequential).unwrap()
    }

    #[test]
    fn zero_kernels_leave_the_state_unchanged() {
        let model = single_cell_death_model(0.0);
        let norm = WeightedNormParams::new(1.0, 0.5).unwrap();
        let quad = TimeRule::default().matrix().unwrap();
        let g = vec![0.3, 0.7];
        let out = picard_slab(&model, &g, 0.5, &quad, &norm, opts()).unwrap();
        assert_eq!(out.end, g);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn pure_death_matches_logistic_decay() {
        let c = 1.5;
        let model = single_cell_death_model(c);
        let norm = WeightedNormParams::new(1.0, 0.5).unwrap();
        let w = model.grid().widths()[0];
        let g0 = 2.0;
        let exact = |t: f64| g0 / (1.0 + c * w * g0 * t);
        for (rule, tol) in [
            (TimeRule::ChebyshevLobatto { nodes: 16 }, 1e-11),
            (TimeRule::Trapezoid { substeps: 64 }, 1e-4),
        ] {
            let quad = rule.matrix().unwrap();
            let out = picard_slab(&model, &[g0, 0.0], 0.2, &quad, &norm, opts()).unwrap();
            assert_relative_eq!(out.end[0], exact(0.2), max_relative = tol);
            assert_eq!(out.end[1], 0.0);
            assert_eq!(out.clamps, 0);
        }
    }

    #[test]
    fn trapezoid_error_is_second_order() {
        let c = 1.5;
        let model = single_cell_death_model(c);
        let norm = WeightedNormParams::new(1.0, 0.5).unwrap();
        let w = model.grid().widths()[0];
        let exact = 2.0 / (1.0 + c * w * 2.0 * 0.5);
        let err = |k: usize| {
            let quad = TimeRule::Trapezoid { substeps: k }.matrix().unwrap();
            (picard_slab(&model, &[2.0, 0.0], 0.5, &quad, &norm, opts()).unwrap().end[0] - exact).abs()
        };
        let ratio = err(16) / err(32);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn exhausted_iterations_report_the_last_difference() {
        let model = single_cell_death_model(50.0);
        let norm = WeightedNormParams::new(1.0, 0.5).unwrap();
        let quad = TimeRule::default().matrix().unwrap();
        let o = PicardOptions { tol: 1e-15, max_iter: 3, k_hint: Some(0.5) };
        match picard_slab(&model, &[2.0, 1.0], 1.0, &quad, &norm, o) {
            Err(Error::Convergence { iterations, last_difference, predicted_bound }) => {
                assert_eq!(iterations, 3);
                assert!(last_difference > 0.0 && predicted_bound.is_finite());
            }
            other => panic!("expected a convergence error, got {other:?}"),
        }
    }
}
