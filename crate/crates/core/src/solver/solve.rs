//! Slab-by-slab time marching.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, GeometricGrid};
use crate::kernels::{CollisionKernel, FragmentationKernel};
use crate::par::ExecMode;
use crate::solver::contraction::{ContractionConstants, ContractionEstimate};
use crate::solver::fragments::FitKind;
use crate::solver::picard::{picard_slab, PicardOptions, SlabQuadrature, TimeRule};
use crate::solver::rhs::DiscreteModel;
use crate::solver::rk4::rk4_step;
use crate::solver::truncation::TruncatedKernel;
use crate::state::{DensityState, WeightedNormParams};

/// How slab lengths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum SlabPolicy {
    /// Slabs of the a-priori length `t0`, re-estimated at every slab start.
    AnalyticT0,
    /// Trial slabs that double while the measured contraction ratio stays
    /// below 1/2 and halve when the iteration fails.
    Adaptive { initial: f64, max: f64 },
}

impl Default for SlabPolicy {
    fn default() -> Self {
        SlabPolicy::Adaptive { initial: 1e-3, max: 0.125 }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub collision: CollisionKernel,
    pub fragmentation: FragmentationKernel,
    pub n: f64,
    pub cells_per_decade: usize,
    pub taper_fraction: f64,
    pub norm: WeightedNormParams,
    pub horizon: f64,
    /// Snapshot times in `[0, horizon]`; empty means `{0, horizon}`.
    pub output_times: Vec<f64>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub slab_policy: SlabPolicy,
    pub time_rule: TimeRule,
    /// Run the explicit integrator alongside.
    pub cross_check: bool,
    pub rk4_dt: f64,
    /// Stop after this many slabs and mark the trajectory truncated.
    pub max_slabs: usize,
    pub exec: ExecMode,
}

impl SolverConfig {
    pub fn new(
        collision: CollisionKernel,
        fragmentation: FragmentationKernel,
        n: f64,
        cells_per_decade: usize,
        norm: WeightedNormParams,
        horizon: f64,
    ) -> Self {
        Self {
            collision,
            fragmentation,
            n,
            cells_per_decade,
            taper_fraction: 0.5,
            norm,
            horizon,
            output_times: Vec::new(),
            picard_tol: 1e-12,
            picard_max_iter: 200,
            slab_policy: SlabPolicy::default(),
            time_rule: TimeRule::default(),
            cross_check: false,
            rk4_dt: 1e-3,
            max_slabs: 1_000_000,
            exec: ExecMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) {
            return Err(Error::Parameter(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::Parameter("picard_max_iter must be at least 1".into()));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon must be finite and nonnegative, got {}", self.horizon)));
        }
        let (sigma, beta, r) = (self.collision.sigma(), self.fragmentation.beta(), self.norm.r());
        if sigma + beta > r + 1e-12 {
            return Err(Error::Parameter(format!(
                "norm exponent r must satisfy sigma + beta <= r, got sigma = {sigma}, beta = {beta}, r = {r}"
            )));
        }
        for &t in &self.output_times {
            if !(t >= 0.0 && t <= self.horizon) {
                return Err(Error::Parameter(format!(
                    "output time {t} lies outside [0, {}]",
                    self.horizon
                )));
            }
        }
        if let SlabPolicy::Adaptive { initial, max } = self.slab_policy {
            if !(initial > 0.0 && max >= initial) {
                return Err(Error::Parameter(format!(
                    "adaptive slabs need 0 < initial <= max, got initial = {initial}, max = {max}"
                )));
            }
        }
        if self.cross_check && !(self.rk4_dt > 0.0) {
            return Err(Error::Parameter(format!("rk4_dt must be positive, got {}", self.rk4_dt)));
        }
        if self.max_slabs == 0 {
            return Err(Error::Parameter("max_slabs must be at least 1".into()));
        }
        self.time_rule.validate()
    }

    pub fn grid(&self) -> Result<Arc<GeometricGrid>> {
        Ok(Arc::new(build_grid(self.n, self.cells_per_decade)?))
    }

    pub fn model(&self) -> Result<DiscreteModel> {
        self.validate()?;
        let kernel = TruncatedKernel::new(self.collision.clone(), self.n, self.taper_fraction)?;
        DiscreteModel::new(self.grid()?, kernel, self.fragmentation.clone(), self.exec)
    }

    /// Sorted, deduplicated snapshot times including 0 and the horizon.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut t = vec![0.0, self.horizon];
        t.extend(&self.output_times);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// Bookkeeping for one accepted slab.
#[derive(Debug, Clone, Serialize)]
pub struct SlabEvent {
    pub start: f64,
    pub length: f64,
    pub iterations: usize,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
    pub estimate: ContractionEstimate,
    pub max_iterate_norm: f64,
    pub clamps: usize,
    pub lost_mass: f64,
    /// Trial lengths rejected before this slab was accepted.
    pub rejected: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShatteringInfo {
    /// Mother pivots whose half-split daughters fall below `1/n`.
    pub mothers: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EventLog {
    pub slabs: Vec<SlabEvent>,
    pub total_clamps: usize,
    pub shattering: Option<ShatteringInfo>,
    /// Fit used by each class of fragment rows.
    pub fragment_fits: Vec<(FitKind, usize)>,
    /// Time reached when the slab budget ran out.
    pub truncated_at: Option<f64>,
    pub rk4_steps: usize,
    pub rk4_clamped: f64,
}

/// Snapshots of one integrator.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<DensityState>,
    /// Cumulative mass lost below the grid at each snapshot.
    pub lost_mass: Vec<f64>,
    pub events: EventLog,
    /// Explicit-integrator twin at the same times, when requested.
    pub twin: Option<Box<Trajectory>>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }
    pub fn completed(&self) -> bool {
        self.events.truncated_at.is_none()
    }
    pub fn final_state(&self) -> &DensityState {
        self.snapshots.last().expect("trajectory always holds the initial state")
    }
}

fn check_initial(model: &DiscreteModel, initial: &DensityState) -> Result<()> {
    if initial.grid().as_ref() != model.grid().as_ref() {
        return Err(Error::Contract("initial state lives on a different grid than the solver".into()));
    }
    Ok(())
}

/// Build the model from `config` and march `initial` to the horizon.
pub fn solve(config: &SolverConfig, initial: &DensityState) -> Result<Trajectory> {
    let model = config.model()?;
    solve_with(&model, config, initial)
}

/// March with a prebuilt model.
pub fn solve_with(model: &DiscreteModel, config: &SolverConfig, initial: &DensityState) -> Result<Trajectory> {
    config.validate()?;
    check_initial(model, initial)?;
    let quad = config.time_rule.matrix()?;
    let constants = ContractionConstants::from_model(model, &config.norm);
    let mut traj = march_picard(model, config, &quad, &constants, initial)?;
    traj.events.fragment_fits = model.table().fit_summary();
    let shattering = model.table().shattering_mothers();
    if !shattering.is_empty() {
        let p = model.grid().pivots();
        traj.events.shattering = Some(ShatteringInfo { mothers: shattering.iter().map(|&m| p[m]).collect() });
    }
    if config.cross_check {
        let mut rk = solve_rk4_with(model, config, initial)?;
        rk.events.fragment_fits = traj.events.fragment_fits.clone();
        traj.twin = Some(Box::new(rk));
    }
    Ok(traj)
}

fn march_picard(
    model: &DiscreteModel,
    config: &SolverConfig,
    quad: &SlabQuadrature,
    constants: &ContractionConstants,
    initial: &DensityState,
) -> Result<Trajectory> {
    let grid = model.grid().clone();
    let targets = config.snapshot_times();
    let horizon = config.horizon;
    let eps = 1e-12 * horizon.max(1.0);
    let mut g = initial.values().to_vec();
    let mut t = 0.0;
    let mut lost = 0.0;
    let mut events = EventLog::default();
    let mut snapshots = vec![DensityState::from_values(grid.clone(), g.clone(), 0.0)?];
    let mut lost_at = vec![0.0];
    let mut next = 1;
    let mut trial = match config.slab_policy {
        SlabPolicy::Adaptive { initial, .. } => initial,
        SlabPolicy::AnalyticT0 => 0.0,
    };
    while next < targets.len() {
        if events.slabs.len() >= config.max_slabs {
            events.truncated_at = Some(t);
            break;
        }
        let target = targets[next];
        let g_norm = config.norm.norm_of(&grid, &g);
        let g_mass = grid.quadrature(&g, 1.0)?;
        let estimate = constants.estimate(g_norm, g_mass, horizon - t)?;
        let opts = PicardOptions { tol: config.picard_tol, max_iter: config.picard_max_iter, k_hint: Some(estimate.k) };
        let mut rejected = Vec::new();
        let (h, outcome) = loop {
            let want = match config.slab_policy {
                SlabPolicy::AnalyticT0 => estimate.t0,
                SlabPolicy::Adaptive { .. } => trial,
            };
            if !(want > 0.0) || t + want == t {
                return Err(Error::Model(format!("slab length {want:e} is too small to advance from t = {t}")));
            }
            let h = if t + want >= target - eps { target - t } else { want };
            match (config.slab_policy, picard_slab(model, &g, h, quad, &config.norm, opts)) {
                (SlabPolicy::AnalyticT0, result) => break (h, result?),
                (SlabPolicy::Adaptive { max, .. }, Ok(out)) if out.max_ratio() < 1.0 => {
                    if out.max_ratio() < 0.5 && h >= trial * (1.0 - 1e-12) {
                        trial = (2.0 * trial).min(max);
                    }
                    break (h, out);
                }
                (SlabPolicy::Adaptive { .. }, Ok(_)) | (SlabPolicy::Adaptive { .. }, Err(Error::Convergence { .. })) => {
                    rejected.push(h);
                    trial = 0.5 * h;
                }
                (_, Err(e)) => return Err(e),
            }
        };
        g = outcome.end.clone();
        if g.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Model(format!("negative density after the slab starting at t = {t}")));
        }
        lost += outcome.lost_mass;
        events.total_clamps += outcome.clamps;
        events.slabs.push(SlabEvent {
            start: t,
            length: h,
            iterations: outcome.iterations,
            max_ratio: outcome.max_ratio(),
            ratios: outcome.ratios,
            estimate,
            max_iterate_norm: outcome.max_iterate_norm,
            clamps: outcome.clamps,
            lost_mass: outcome.lost_mass,
            rejected,
        });
        t = if (t + h - target).abs() <= eps { target } else { t + h };
        if t == target {
            snapshots.push(DensityState::from_values(grid.clone(), g.clone(), t)?);
            lost_at.push(lost);
            next += 1;
        }
    }
    Ok(Trajectory { snapshots, lost_mass: lost_at, events, twin: None })
}

/// Explicit RK4 run at the configured step, clipped to snapshot times.
pub fn solve_rk4(config: &SolverConfig, initial: &DensityState) -> Result<Trajectory> {
    let model = config.model()?;
    solve_rk4_with(&model, config, initial)
}

pub fn solve_rk4_with(model: &DiscreteModel, config: &SolverConfig, initial: &DensityState) -> Result<Trajectory> {
    check_initial(model, initial)?;
    if !(config.rk4_dt > 0.0) {
        return Err(Error::Parameter(format!("rk4_dt must be positive, got {}", config.rk4_dt)));
    }
    let grid = model.grid().clone();
    let targets = config.snapshot_times();
    let mut g = initial.values().to_vec();
    let mut t = 0.0;
    let mut lost = 0.0;
    let mut events = EventLog::default();
    let mut snapshots = vec![DensityState::from_values(grid.clone(), g.clone(), 0.0)?];
    let mut lost_at = vec![0.0];
    for &target in &targets[1..] {
        let span = target - t;
        let steps = (span / config.rk4_dt - 1e-9).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            let step = rk4_step(model, &g, dt);
            g = step.values;
            lost += step.lost_mass;
            events.rk4_clamped += step.clamped;
            if step.clamped > 0.0 {
                events.total_clamps += 1;
            }
        }
        events.rk4_steps += steps;
        t = target;
        snapshots.push(DensityState::from_values(grid.clone(), g.clone(), t)?);
        lost_at.push(lost);
    }
    Ok(Trajectory { snapshots, lost_mass: lost_at, events, twin: None })
}
