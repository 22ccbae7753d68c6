//! Discrete right-hand side `gain − death · g` of the truncated equation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::GeometricGrid;
use crate::kernels::FragmentationKernel;
use crate::par::{self, ExecMode};
use crate::solver::fragments::FragmentTable;
use crate::solver::truncation::TruncatedKernel;
use crate::state::DensityState;

/// Kernels tabulated on a grid: the collision matrix on pivots and the
/// fragment table.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    grid: Arc<GeometricGrid>,
    kernel: TruncatedKernel,
    fragmentation: FragmentationKernel,
    cmat: Vec<f64>,
    table: FragmentTable,
    exec: ExecMode,
}

/// Per-cell rates at one state.
#[derive(Debug, Clone, Default)]
pub struct Rates {
    /// `d_i = Σ_j C_n(p_i, p_j) g_j w_j`.
    pub death: Vec<f64>,
    /// Death sums restricted to each partner class.
    pub classes: Vec<f64>,
    pub gain: Vec<f64>,
    /// Mass leaving the grid per unit time.
    pub loss: f64,
}

impl DiscreteModel {
    pub fn new(
        grid: Arc<GeometricGrid>,
        kernel: TruncatedKernel,
        fragmentation: FragmentationKernel,
        exec: ExecMode,
    ) -> Result<Self> {
        let cmat = kernel.pivot_matrix(&grid);
        if let Some(bad) = cmat.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Model(format!("collision kernel produced {bad} on the grid")));
        }
        let table = FragmentTable::build(&fragmentation, &grid)?;
        Ok(Self { grid, kernel, fragmentation, cmat, table, exec })
    }

    pub fn grid(&self) -> &Arc<GeometricGrid> {
        &self.grid
    }
    pub fn kernel(&self) -> &TruncatedKernel {
        &self.kernel
    }
    pub fn fragmentation(&self) -> &FragmentationKernel {
        &self.fragmentation
    }
    pub fn table(&self) -> &FragmentTable {
        &self.table
    }
    pub fn exec(&self) -> ExecMode {
        self.exec
    }
    pub fn set_exec(&mut self, exec: ExecMode) {
        self.exec = exec;
    }
    pub fn len(&self) -> usize {
        self.grid.len()
    }
    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
    /// `C_n(p_i, p_j)`.
    pub fn collision(&self, i: usize, j: usize) -> f64 {
        self.cmat[i * self.len() + j]
    }
    pub fn max_collision(&self) -> f64 {
        self.cmat.iter().copied().fold(0.0, f64::max)
    }

    pub fn death_rate_at(&self, g: &[f64], i: usize) -> f64 {
        let n = self.len();
        let row = &self.cmat[i * n..(i + 1) * n];
        let w = self.grid.widths();
        let mut s = 0.0;
        for j in 0..n {
            s += row[j] * g[j] * w[j];
        }
        s
    }

    pub fn death_rates(&self, g: &[f64], out: &mut [f64]) {
        par::fill(self.exec, out, |i| self.death_rate_at(g, i));
    }

    fn class_rates(&self, g: &[f64], death: &[f64], out: &mut Vec<f64>) {
        if self.table.partner_free() {
            out.clear();
            out.extend_from_slice(death);
            return;
        }
        let n = self.len();
        let w = self.grid.widths();
        let per_mother = par::map_range(self.exec, n, |m| {
            let classes = self.table.classes_of(m);
            let mut acc = vec![0.0; classes.len()];
            for z in 0..n {
                acc[self.table.class_of(m, z) - classes.start] += self.cmat[m * n + z] * g[z] * w[z];
            }
            acc
        });
        out.clear();
        for acc in per_mother {
            out.extend(acc);
        }
    }

    fn gain_at(&self, g: &[f64], classes: &[f64], i: usize) -> f64 {
        let w = self.grid.widths();
        let mut s = 0.0;
        for inc in self.table.incoming(i) {
            let m = inc.mother as usize;
            s += inc.count * g[m] * w[m] * classes[inc.class as usize];
        }
        s / w[i]
    }

    fn loss_from(&self, g: &[f64], classes: &[f64]) -> f64 {
        if !self.table.has_losses() {
            return 0.0;
        }
        let w = self.grid.widths();
        (0..self.table.class_count())
            .map(|k| {
                let m = self.table.class_mother(k);
                self.table.lost_mass(k) * g[m] * w[m] * classes[k]
            })
            .sum()
    }

    /// Death, gain and loss rates at `g`, reusing the buffers in `rates`.
    pub fn rates_into(&self, g: &[f64], rates: &mut Rates) {
        let n = self.len();
        rates.death.resize(n, 0.0);
        rates.gain.resize(n, 0.0);
        self.death_rates(g, &mut rates.death);
        let mut classes = std::mem::take(&mut rates.classes);
        self.class_rates(g, &rates.death, &mut classes);
        par::fill(self.exec, &mut rates.gain, |i| self.gain_at(g, &classes, i));
        rates.loss = self.loss_from(g, &classes);
        rates.classes = classes;
    }

    pub fn rates(&self, g: &[f64]) -> Rates {
        let mut r = Rates::default();
        self.rates_into(g, &mut r);
        r
    }

    pub fn gain_rate_at(&self, g: &[f64], i: usize) -> f64 {
        let death: Vec<f64> = (0..self.len()).map(|j| self.death_rate_at(g, j)).collect();
        let mut classes = Vec::new();
        self.class_rates(g, &death, &mut classes);
        self.gain_at(g, &classes, i)
    }

    /// `gain − death · g`; returns the mass loss rate.
    pub fn derivative(&self, g: &[f64], rates: &mut Rates, out: &mut [f64]) -> f64 {
        self.rates_into(g, rates);
        for i in 0..out.len() {
            out[i] = rates.gain[i] - rates.death[i] * g[i];
        }
        rates.loss
    }
}

fn check_cell(state: &DensityState, cell: usize) -> Result<()> {
    if cell >= state.grid().len() {
        return Err(Error::Contract(format!(
            "cell {cell} out of range for a grid of {} cells",
            state.grid().len()
        )));
    }
    Ok(())
}

/// `Σ_j C_n(p_cell, p_j) g_j w_j`.
pub fn death_rate(state: &DensityState, kernel: &TruncatedKernel, cell: usize) -> Result<f64> {
    check_cell(state, cell)?;
    let grid = state.grid();
    let x = grid.pivots()[cell];
    Ok(grid.weighted_sum(state.values(), |y| kernel.rate(x, y)))
}

/// Gain density at `cell` from the discretized fragment weights.
pub fn gain_rate(
    state: &DensityState,
    kernel: &TruncatedKernel,
    fragmentation: &FragmentationKernel,
    cell: usize,
) -> Result<f64> {
    check_cell(state, cell)?;
    let model = DiscreteModel::new(state.grid().clone(), kernel.clone(), fragmentation.clone(), ExecMode::Sequential)?;
    Ok(model.gain_rate_at(state.values(), cell))
}
