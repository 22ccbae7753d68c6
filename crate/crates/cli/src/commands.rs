//! The four subcommands. Each returns whether its checks passed; hard
//! failures come back as [`CliError`].

use std::path::{Path, PathBuf};

use fragkin_core::diagnostics::{
    mass_balance_residual, mass_drift, moment_bounds_check, psi, refinement_study, uniqueness_distance,
    BoundReport, MomentBoundParams, RefinementTable,
};
use fragkin_core::kernels::{verify_hypotheses, CheckStatus, HypothesisReport};
use fragkin_core::solver::{estimate_contraction, solve, ContractionEstimate, EventLog, Trajectory};
use fragkin_core::DensityState;
use serde::Serialize;

use crate::config::{Scenario, ScenarioConfig};
use crate::error::CliError;
use crate::output::{moments_csv, trajectory_csv, OutputDir};

/// Tolerance of the twin-integrator agreement checks.
const TWIN_TOL: f64 = 1e-3;

pub struct Loaded {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (config, scenario) =
        ScenarioConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded { config, scenario })
}

/// `FRAGKIN_OUT` wins over `--out`, which wins over `[output] dir`.
pub fn output_dir(flag: Option<PathBuf>, config: &ScenarioConfig) -> Result<OutputDir, CliError> {
    let root = std::env::var_os("FRAGKIN_OUT")
        .map(PathBuf::from)
        .or(flag)
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    OutputDir::create(root)
}

fn initial_state(s: &Scenario) -> Result<DensityState, CliError> {
    Ok(s.profile.build(s.solver.grid()?, s.sampling, s.normalization)?)
}

#[derive(Serialize)]
struct Events<'a> {
    picard: &'a EventLog,
    #[serde(skip_serializing_if = "Option::is_none")]
    rk4: Option<&'a EventLog>,
}

#[derive(Serialize)]
struct TwinCheck {
    sup_cell_relative_difference: f64,
    uniqueness_distance: Vec<f64>,
    psi: Vec<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct Diagnostics {
    completed: bool,
    mass_drift: f64,
    mass_balance_residual: f64,
    moment_bounds_check: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    twin: Option<TwinCheck>,
    pass: bool,
}

fn sup_cell_relative(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        for (&u, &v) in x.values().iter().zip(y.values()) {
            let scale = u.abs().max(v.abs());
            if scale > 0.0 {
                worst = worst.max((u - v).abs() / scale);
            }
        }
    }
    worst
}

fn twin_check(traj: &Trajectory, s: &Scenario) -> Result<Option<TwinCheck>, CliError> {
    let Some(twin) = traj.twin.as_deref() else { return Ok(None) };
    let phi = uniqueness_distance(traj, twin, &s.uniqueness)?;
    let psi = psi(traj, twin, &s.uniqueness)?;
    let sup = sup_cell_relative(traj, twin);
    let pass = sup <= TWIN_TOL && phi.iter().zip(&psi).all(|(p, q)| *p <= TWIN_TOL * q);
    Ok(Some(TwinCheck { sup_cell_relative_difference: sup, uniqueness_distance: phi, psi, pass }))
}

pub fn run(loaded: &Loaded, out: &OutputDir) -> Result<bool, CliError> {
    let s = &loaded.scenario;
    let model = s.solver.model()?;
    let g0 = initial_state(s)?;
    let traj = solve(&s.solver, &g0)?;
    let r = s.solver.norm.r();

    out.write("scenario.toml", loaded.config.to_toml().as_bytes())?;
    out.write("trajectory.csv", trajectory_csv(&traj).as_bytes())?;
    out.write("moments.csv", moments_csv(&traj, r).as_bytes())?;
    out.write_json("events.json", &Events { picard: &traj.events, rk4: traj.twin.as_deref().map(|t| &t.events) })?;

    let params = MomentBoundParams::from_model(&model, r);
    let reports = moment_bounds_check(&traj, &params);
    let twin = twin_check(&traj, s)?;
    let pass = traj.completed() && reports.iter().all(|b| b.pass) && twin.as_ref().is_none_or(|t| t.pass);
    let diagnostics = Diagnostics {
        completed: traj.completed(),
        mass_drift: mass_drift(&traj),
        mass_balance_residual: mass_balance_residual(&traj),
        moment_bounds_check: reports,
        twin,
        pass,
    };
    out.write_json("diagnostics.json", &diagnostics)?;
    for b in &diagnostics.moment_bounds_check {
        println!("{:<18} {}", b.name, if b.pass { "pass" } else { "FAIL" });
    }
    println!("mass drift {:e}; artifacts in {}", diagnostics.mass_drift, out.path().display());
    Ok(pass)
}

#[derive(Serialize)]
struct EstimateArtifact {
    n: f64,
    cells: usize,
    initial_norm: f64,
    initial_mass: f64,
    estimate: ContractionEstimate,
}

pub fn estimate(loaded: &Loaded, out: &OutputDir) -> Result<bool, CliError> {
    let s = &loaded.scenario;
    let g0 = initial_state(s)?;
    let norm = g0.weighted_norm(&s.solver.norm);
    let mass = g0.moment(1.0)?;
    let estimate = estimate_contraction(&s.solver, norm, mass)?;
    let artifact =
        EstimateArtifact { n: s.solver.n, cells: g0.grid().len(), initial_norm: norm, initial_mass: mass, estimate };
    let path = out.write_json("estimate.json", &artifact)?;
    println!("{}", serde_json::to_string_pretty(&artifact).expect("estimate serializes"));
    println!("written to {}", path.display());
    Ok(estimate.k < 1.0)
}

pub fn refine(loaded: &Loaded, out: &OutputDir, n_list: &[f64]) -> Result<bool, CliError> {
    let s = &loaded.scenario;
    let list: Vec<f64> = if !n_list.is_empty() {
        n_list.to_vec()
    } else if !loaded.config.refine.n_list.is_empty() {
        loaded.config.refine.n_list.clone()
    } else {
        vec![s.solver.n]
    };
    if list.iter().any(|&n| !(n > 1.0 && n.is_finite())) {
        return Err(CliError::Config("--n-list: every truncation index must exceed 1".into()));
    }
    let n_min = list.iter().copied().fold(f64::INFINITY, f64::min);
    let window = loaded.config.refine.window.map_or((1.0 / n_min, n_min), |[a, b]| (a, b));
    let table: RefinementTable = refinement_study(&s.solver, &list, window, &s.profile, s.normalization)?;
    out.write_json("refine.json", &table)?;
    for d in &table.differences {
        println!("n {} -> {}: sup difference {:e}", d.n_coarse, d.n_fine, d.sup_difference);
    }
    println!("cauchy: {}", table.cauchy);
    Ok(table.cauchy)
}

pub fn validate(loaded: &Loaded, out: &OutputDir, untruncated: bool) -> Result<bool, CliError> {
    let s = &loaded.scenario;
    let n = s.solver.n;
    let domain = if untruncated { (1.0 / (n * n), n * n) } else { (1.0 / n, n) };
    let report: HypothesisReport = verify_hypotheses(&s.solver.collision, &s.solver.fragmentation, domain, 32, 1e-9);
    out.write_json("validate.json", &report)?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Warning => "warning",
            CheckStatus::NotApplicable => "n/a",
        };
        print!("{:<34} {status}", c.name);
        if let Some(w) = &c.witness {
            if c.status == CheckStatus::Fail {
                print!(" witness {w:?}");
            }
        }
        if let Some(note) = &c.note {
            print!(" ({note})");
        }
        println!();
    }
    Ok(report.passed())
}
