//! Discrete fragment redistribution.
//!
//! A breakage of a mother at pivot `y_m` produces `c_i` daughters in cell
//! `i` (so the density weight is `W_i = c_i / width_i`). Continuous kernels
//! are first split between the two pivots bracketing each daughter size,
//! which keeps both count and mass of daughters above the first pivot;
//! daughters below the first pivot are counted into cell 0. An affine
//! correction `c_i ← c_i (a + b p_i)` then restores `Σ c_i = θ` and
//! `Σ p_i c_i = y_m` exactly. When that correction would make a weight
//! negative, a single scalar restores the mass alone.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GeometricGrid;
use crate::kernels::{FragmentationFamily, FragmentationKernel};

/// Relative distance at which a half-split daughter counts as sitting on a pivot.
const PIVOT_SNAP: f64 = 1e-12;

/// How a row of weights satisfied the discrete moment identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// Count and mass exact.
    TwoMoment,
    /// Mass exact, count approximate.
    MassOnly,
    /// Half-split bracketing the daughter size; count and mass exact.
    Bracketed,
    /// Half-split daughter between `1/n` and the first pivot; mass exact.
    FloorCell,
    /// Half-split daughter below `1/n`: the mother's mass leaves the grid.
    Shattered,
    /// The mother survives the collision intact.
    NoBreak,
    /// The kernel produces no daughters on the grid.
    Empty,
}

/// Fragment weights for one mother cell and partner.
#[derive(Debug, Clone, Serialize)]
pub struct FragmentWeights {
    /// Density weights `W(i | mother)` for every cell.
    pub weights: Vec<f64>,
    /// Mass leaving the grid per breakage event.
    pub lost_mass: f64,
    /// `Σ W_i width_i`.
    pub count: f64,
    /// `Σ p_i W_i width_i`.
    pub mass: f64,
    /// The kernel's `θ(y_m, z)`.
    pub target_count: f64,
    pub fit: FitKind,
}

/// Daughter counts for one mother, stored over a contiguous cell range.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub start: usize,
    pub counts: Vec<f64>,
    pub lost_mass: f64,
    pub fit: FitKind,
    pub target_count: f64,
}

impl Row {
    fn from_dense(counts: Vec<f64>, lost_mass: f64, fit: FitKind, target_count: f64) -> Self {
        let start = counts.iter().position(|&c| c != 0.0).unwrap_or(0);
        let end = counts.iter().rposition(|&c| c != 0.0).map_or(start, |e| e + 1);
        Row { start, counts: counts[start..end].to_vec(), lost_mass, fit, target_count }
    }

    fn dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        out[self.start..self.start + self.counts.len()].copy_from_slice(&self.counts);
        out
    }
}

/// Daughter counts for mother `m` hit by a partner at pivot `z`.
pub(crate) fn fragment_row(fspec: &FragmentationKernel, grid: &GeometricGrid, m: usize, z: f64) -> Result<Row> {
    let p = grid.pivots();
    let y = p[m];
    let len = grid.len();
    match fspec.family() {
        FragmentationFamily::HalfSplit { rule } => {
            let mut counts = vec![0.0; len];
            if !rule.breaks(y, z) {
                counts[m] = 1.0;
                return Ok(Row::from_dense(counts, 0.0, FitKind::NoBreak, 1.0));
            }
            let half = 0.5 * y;
            if half < grid.lower() {
                return Ok(Row::from_dense(counts, y, FitKind::Shattered, 2.0));
            }
            if half < p[0] * (1.0 - PIVOT_SNAP) {
                counts[0] = y / p[0];
                return Ok(Row::from_dense(counts, 0.0, FitKind::FloorCell, 2.0));
            }
            // First pivot strictly above half (or the last cell).
            let hi = p.partition_point(|&q| q <= half).min(len - 1);
            let lo = hi.saturating_sub(1);
            if (half - p[lo]).abs() <= PIVOT_SNAP * half {
                counts[lo] = 2.0;
            } else if (half - p[hi]).abs() <= PIVOT_SNAP * half {
                counts[hi] = 2.0;
            } else {
                let frac = (half - p[lo]) / (p[hi] - p[lo]);
                counts[lo] = 2.0 * (1.0 - frac);
                counts[hi] = 2.0 * frac;
            }
            Ok(Row::from_dense(counts, 0.0, FitKind::Bracketed, 2.0))
        }
        FragmentationFamily::Powerlaw { .. } | FragmentationFamily::Custom => {
            let theta = fspec.fragment_count(y, z)?;
            let mut counts = vec![0.0; len];
            let (below, _) = fspec.partial_moments(y, z, 0.0, p[0].min(y))?;
            counts[0] += below;
            for i in 0..m {
                let (a, b) = (p[i], p[i + 1]);
                let (n0, n1) = fspec.partial_moments(y, z, a, b)?;
                counts[i] += (b * n0 - n1) / (b - a);
                counts[i + 1] += (n1 - a * n0) / (b - a);
            }
            if counts.iter().any(|c| !c.is_finite()) {
                return Err(Error::Model(format!("fragment distribution of mother {y} is not integrable")));
            }
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for (c, &x) in counts.iter().zip(p) {
                s0 += c;
                s1 += c * x;
                s2 += c * x * x;
            }
            if s1 <= 0.0 {
                return Ok(Row::from_dense(counts, 0.0, FitKind::Empty, theta));
            }
            let det = s0 * s2 - s1 * s1;
            if m > 0 && det > 1e-12 * s0 * s2 {
                let a = (theta * s2 - y * s1) / det;
                let b = (s0 * y - s1 * theta) / det;
                let ok = counts.iter().zip(p).all(|(&c, &x)| c == 0.0 || a + b * x >= 0.0);
                if ok {
                    for (c, &x) in counts.iter_mut().zip(p) {
                        *c *= a + b * x;
                    }
                    return Ok(Row::from_dense(counts, 0.0, FitKind::TwoMoment, theta));
                }
            }
            let scale = y / s1;
            for c in &mut counts {
                *c *= scale;
            }
            Ok(Row::from_dense(counts, 0.0, FitKind::MassOnly, theta))
        }
    }
}

/// Weights `W(i | mother)` with the discrete mass identity
/// `Σ p_i W_i width_i = p_mother` (less any shattering loss).
pub fn discretize_fragments(
    fspec: &FragmentationKernel,
    grid: &GeometricGrid,
    mother: usize,
    z: usize,
) -> Result<FragmentWeights> {
    let len = grid.len();
    if mother >= len || z >= len {
        return Err(Error::Contract(format!("cell index out of range for a grid of {len} cells")));
    }
    let row = fragment_row(fspec, grid, mother, grid.pivots()[z])?;
    let counts = row.dense(len);
    let weights: Vec<f64> = counts.iter().zip(grid.widths()).map(|(c, w)| c / w).collect();
    Ok(FragmentWeights {
        count: counts.iter().sum(),
        mass: counts.iter().zip(grid.pivots()).map(|(c, p)| c * p).sum(),
        weights,
        lost_mass: row.lost_mass,
        target_count: row.target_count,
        fit: row.fit,
    })
}

/// Incoming contribution to an output cell: `counts · G_mother · P_class`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Incoming {
    pub class: u32,
    pub mother: u32,
    pub count: f64,
}

/// All fragment rows on a grid, grouped by partner class.
///
/// Partners `z` of mother `m` that produce identical rows share a class;
/// the gain term then needs only the class-restricted death sums
/// `P_{m,k} = Σ_{z ∈ k} C(m, z) G_z`.
#[derive(Debug, Clone)]
pub struct FragmentTable {
    len: usize,
    /// Global class index of each `(m, z)`; empty when every mother has one class.
    class_of: Vec<u32>,
    /// First global class of each mother (length `len + 1`).
    class_start: Vec<usize>,
    rows: Vec<Row>,
    class_mother: Vec<u32>,
    incoming: Vec<Vec<Incoming>>,
}

impl FragmentTable {
    pub fn build(fspec: &FragmentationKernel, grid: &GeometricGrid) -> Result<Self> {
        let len = grid.len();
        let p = grid.pivots();
        let mut rows = Vec::new();
        let mut class_start = Vec::with_capacity(len + 1);
        let mut class_mother = Vec::new();
        let mut class_of = Vec::new();
        if fspec.partner_dependent() {
            class_of = vec![0u32; len * len];
        }
        for m in 0..len {
            class_start.push(rows.len());
            if !fspec.partner_dependent() {
                rows.push(fragment_row(fspec, grid, m, 1.0)?);
                class_mother.push(m as u32);
                continue;
            }
            let first = rows.len();
            for z in 0..len {
                let row = fragment_row(fspec, grid, m, p[z])?;
                let existing = rows[first..].iter().position(|r| *r == row);
                let k = match existing {
                    Some(k) => first + k,
                    None => {
                        rows.push(row);
                        class_mother.push(m as u32);
                        rows.len() - 1
                    }
                };
                class_of[m * len + z] = k as u32;
            }
        }
        class_start.push(rows.len());

        let mut incoming = vec![Vec::new(); len];
        for (k, row) in rows.iter().enumerate() {
            for (off, &c) in row.counts.iter().enumerate() {
                if c != 0.0 {
                    incoming[row.start + off].push(Incoming { class: k as u32, mother: class_mother[k], count: c });
                }
            }
        }
        Ok(Self { len, class_of, class_start, rows, class_mother, incoming })
    }

    pub fn len(&self) -> usize {
        self.len
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    pub fn class_count(&self) -> usize {
        self.rows.len()
    }
    /// True when every mother has a single partner class.
    pub fn partner_free(&self) -> bool {
        self.class_of.is_empty()
    }
    pub(crate) fn class_of(&self, m: usize, z: usize) -> usize {
        if self.class_of.is_empty() {
            m
        } else {
            self.class_of[m * self.len + z] as usize
        }
    }
    pub(crate) fn classes_of(&self, m: usize) -> std::ops::Range<usize> {
        self.class_start[m]..self.class_start[m + 1]
    }
    pub(crate) fn class_mother(&self, k: usize) -> usize {
        self.class_mother[k] as usize
    }
    pub(crate) fn incoming(&self, i: usize) -> &[Incoming] {
        &self.incoming[i]
    }
    pub(crate) fn lost_mass(&self, k: usize) -> f64 {
        self.rows[k].lost_mass
    }
    pub fn has_losses(&self) -> bool {
        self.rows.iter().any(|r| r.lost_mass > 0.0)
    }

    /// Largest discrete daughter density `c_i / width_i`.
    pub fn max_density(&self, grid: &GeometricGrid) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.counts.iter().enumerate().map(move |(o, c)| c / grid.widths()[r.start + o]))
            .fold(0.0, f64::max)
    }

    /// Smallest `k2` with `W_i ≤ k2 / y_m^β` over the table.
    pub fn effective_k2(&self, grid: &GeometricGrid, beta: f64) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(k, r)| {
                let y = grid.pivots()[self.class_mother(k)];
                r.counts
                    .iter()
                    .enumerate()
                    .map(move |(o, c)| c / grid.widths()[r.start + o] * y.powf(beta))
            })
            .fold(0.0, f64::max)
    }

    /// Per-class tally of how rows were fitted.
    pub fn fit_summary(&self) -> Vec<(FitKind, usize)> {
        let mut out: Vec<(FitKind, usize)> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|(k, _)| *k == r.fit) {
                Some((_, n)) => *n += 1,
                None => out.push((r.fit, 1)),
            }
        }
        out
    }

    /// Mothers whose daughters leave the grid entirely.
    pub fn shattering_mothers(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.fit == FitKind::Shattered)
            .map(|(k, _)| self.class_mother(k))
            .collect();
        out.dedup();
        out
    }
}
