//! Post-processing checks over solver trajectories: conservation, moment
//! bounds with closed-form envelopes, the uniqueness distance with its
//! Gronwall envelope, and refinement in the truncation parameter `n`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GeometricGrid;
use crate::kernels::{FragmentationFamily, FragmentationKernel};
use crate::quad;
use crate::solver::{solve, DiscreteModel, SolverConfig, Trajectory};
use crate::state::{DensityState, InitialProfile, Normalization, UniquenessParams};

/// Largest relative deviation of `N_1` from its initial value.
pub fn mass_drift(traj: &Trajectory) -> f64 {
    let m0 = mass(&traj.snapshots[0]);
    if m0 == 0.0 {
        return 0.0;
    }
    traj.snapshots.iter().map(|s| (mass(s) - m0).abs() / m0).fold(0.0, f64::max)
}

/// Like [`mass_drift`] but with the logged shattering loss added back, so a
/// run that only leaks through the lower cutoff reports a residual near 0.
pub fn mass_balance_residual(traj: &Trajectory) -> f64 {
    let m0 = mass(&traj.snapshots[0]);
    if m0 == 0.0 {
        return 0.0;
    }
    traj.snapshots
        .iter()
        .zip(&traj.lost_mass)
        .map(|(s, lost)| (mass(s) + lost - m0).abs() / m0)
        .fold(0.0, f64::max)
}

fn mass(s: &DensityState) -> f64 {
    s.grid().quadrature(s.values(), 1.0).expect("state length matches its grid")
}

fn moment(s: &DensityState, p: f64) -> f64 {
    s.grid().quadrature(s.values(), p).expect("state length matches its grid")
}

/// Value of a closed-form envelope, or the time at which it ceases to exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    Finite { value: f64 },
    BlowUp { at: f64 },
}

impl Envelope {
    /// The bound as a number; `+∞` past blowup.
    pub fn value(self) -> f64 {
        match self {
            Envelope::Finite { value } => value,
            Envelope::BlowUp { .. } => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Envelope::Finite { value } => Some(value),
            Envelope::BlowUp { .. } => None,
        }
    }
}

/// Solution of `u' = a c u²` written back as `(u - S)/a`, where `u = aB + S`.
fn quadratic_envelope(b0: f64, a: f64, c: f64, s: f64, t: f64) -> Envelope {
    let u0 = a * b0 + s;
    if c == 0.0 || u0 == 0.0 {
        return Envelope::Finite { value: b0 };
    }
    let at = 1.0 / (a * c * u0);
    if t >= at {
        return Envelope::BlowUp { at };
    }
    let u = u0 / (1.0 - a * c * u0 * t);
    Envelope::Finite { value: (u - s) / a }
}

/// Exact solution of `B' = c (2B + S)²`, `B(0) = B0`, with
/// `c = k1 k2 / (1 - r)` and `S = N̄1 + N̄2`: the envelope for `N_{-r}`.
pub fn riccati_envelope(b0: f64, n1bar: f64, n2bar: f64, k1: f64, k2: f64, r: f64, t: f64) -> Result<Envelope> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Parameter(format!("r must lie in (0, 1), got {r}")));
    }
    if !(b0 >= 0.0) {
        return Err(Error::Parameter(format!("B0 must be nonnegative, got {b0}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Parameter(format!("t must be nonnegative, got {t}")));
    }
    let c = k1 * k2 / (1.0 - r);
    Ok(quadratic_envelope(b0, 2.0, c, n1bar + n2bar, t))
}

/// Envelope for `N_0` from `N_0' ≤ k1 (N-1) (2^ν N̄_{-σ} + N_0 + N̄1)²`.
///
/// With `σ = 0` the term `N̄_{-σ}` is `N_0` itself and the equation closes
/// with slope `1 + 2^ν`; otherwise the observed supremum `n_sigma_bar` enters
/// the constant.
#[allow(clippy::too_many_arguments)]
pub fn number_envelope(
    a0: f64,
    n_sigma_bar: f64,
    n1bar: f64,
    k1: f64,
    theta_max: f64,
    nu: f64,
    sigma: f64,
    t: f64,
) -> Result<Envelope> {
    if !(a0 >= 0.0) {
        return Err(Error::Parameter(format!("N0(0) must be nonnegative, got {a0}")));
    }
    if !theta_max.is_finite() {
        return Err(Error::Unsupported("fragment count has no finite bound".into()));
    }
    let c = k1 * (theta_max - 1.0).max(0.0);
    let w = 2f64.powf(nu);
    let (a, s) = if sigma == 0.0 { (1.0 + w, n1bar) } else { (1.0, w * n_sigma_bar + n1bar) };
    Ok(quadratic_envelope(a0, a, c, s, t))
}

/// Per-snapshot comparison of an observed quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub times: Vec<f64>,
    pub observed: Vec<f64>,
    /// `None` where the envelope has blown up (the bound is vacuous).
    pub bound: Vec<Option<f64>>,
    /// Smallest `bound - observed` over snapshots with a finite bound.
    pub worst_margin: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    fn new(name: &str, times: Vec<f64>, observed: Vec<f64>, bound: Vec<Option<f64>>, tol: f64) -> Self {
        let mut worst: Option<f64> = None;
        let mut pass = true;
        for (o, b) in observed.iter().zip(&bound) {
            if let Some(b) = b {
                pass &= *o <= b * (1.0 + tol);
                let m = b - o;
                worst = Some(worst.map_or(m, |w| w.min(m)));
            }
        }
        Self { name: name.into(), times, observed, bound, worst_margin: worst, pass, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Constants entering the moment envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundParams {
    /// Order of the negative moment `N_{-r}`.
    pub r: f64,
    pub k1: f64,
    pub k2: f64,
    pub sigma: f64,
    pub nu: f64,
    pub theta_max: f64,
    /// Allowed relative drift of `N_1`.
    pub mass_tol: f64,
    /// Relative slack in `observed ≤ bound (1 + tol)`.
    pub tol: f64,
}

impl MomentBoundParams {
    /// Constants of a built model. Half-split kernels use the bound implied
    /// by the discrete weight table, which is what the dynamics see.
    pub fn from_model(model: &DiscreteModel, r: f64) -> Self {
        let c = model.kernel().base();
        let f = model.fragmentation();
        let k2 = if f.is_delta() { model.table().effective_k2(model.grid(), f.beta()) } else { f.k2() };
        Self {
            r,
            k1: c.k1(),
            k2,
            sigma: c.sigma(),
            nu: c.nu(),
            theta_max: f.theta_max(),
            mass_tol: 1e-6,
            tol: 1e-9,
        }
    }
}

/// Reports for mass conservation, `N_2` monotonicity, the `N_{-r}` Riccati
/// envelope and the `N_0` envelope.
pub fn moment_bounds_check(traj: &Trajectory, params: &MomentBoundParams) -> Vec<BoundReport> {
    let times = traj.times();
    let series = |p: f64| traj.snapshots.iter().map(|s| moment(s, p)).collect::<Vec<_>>();
    let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let n1 = series(1.0);
    let n2 = series(2.0);
    let nr = series(-params.r);
    let n0 = series(0.0);
    let mut reports = Vec::with_capacity(4);

    let drift: Vec<f64> = n1.iter().map(|m| (m - n1[0]).abs()).collect();
    let allowed = vec![Some(params.mass_tol * n1[0]); n1.len()];
    reports.push(BoundReport::new("mass-conservation", times.clone(), drift, allowed, 0.0));

    let previous: Vec<Option<f64>> = (0..n2.len()).map(|i| Some(n2[i.saturating_sub(1)])).collect();
    reports.push(BoundReport::new("energy-moment", times.clone(), n2.clone(), previous, params.tol));

    let (n1bar, n2bar) = (sup(&n1), sup(&n2));
    let riccati: Vec<Option<f64>> = times
        .iter()
        .map(|&t| {
            riccati_envelope(nr[0], n1bar, n2bar, params.k1, params.k2, params.r, t)
                .map(Envelope::finite)
                .unwrap_or(None)
        })
        .collect();
    let blown = riccati.iter().filter(|b| b.is_none()).count();
    let mut report = BoundReport::new("negative-moment", times.clone(), nr, riccati, params.tol);
    if blown > 0 {
        report = report.with_note(format!("envelope blown up at {blown} of {} snapshots", times.len()));
    }
    reports.push(report);

    if params.theta_max.is_finite() {
        let n_sigma_bar = if params.sigma > 0.0 { sup(&series(-params.sigma)) } else { 0.0 };
        let bound: Vec<Option<f64>> = times
            .iter()
            .map(|&t| {
                number_envelope(n0[0], n_sigma_bar, n1bar, params.k1, params.theta_max, params.nu, params.sigma, t)
                    .map(Envelope::finite)
                    .unwrap_or(None)
            })
            .collect();
        reports.push(BoundReport::new("number-moment", times, n0, bound, params.tol));
    } else {
        let none = vec![None; n0.len()];
        reports.push(
            BoundReport::new("number-moment", times, n0, none, params.tol)
                .with_note("skipped: fragment count has no finite bound"),
        );
    }
    reports
}

fn check_pair(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::Contract(format!(
            "trajectories hold {} and {} snapshots",
            a.snapshots.len(),
            b.snapshots.len()
        )));
    }
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        if x.grid().as_ref() != y.grid().as_ref() {
            return Err(Error::Contract("trajectories live on different grids".into()));
        }
        if (x.time() - y.time()).abs() > 1e-12 * x.time().abs().max(1.0) {
            return Err(Error::Contract(format!("snapshot times differ: {} vs {}", x.time(), y.time())));
        }
    }
    Ok(())
}

fn pairwise(a: &Trajectory, b: &Trajectory, op: impl Fn(f64, f64) -> f64, params: &UniquenessParams) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    Ok(a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            let v: Vec<f64> = x.values().iter().zip(y.values()).map(|(&p, &q)| op(p, q)).collect();
            params.norm_of(x.grid(), &v)
        })
        .collect())
}

/// `Φ(t) = ∫ (e^{λx} + x^{-θ}) |g_A - g_B| dx` at every snapshot.
pub fn uniqueness_distance(a: &Trajectory, b: &Trajectory, params: &UniquenessParams) -> Result<Vec<f64>> {
    pairwise(a, b, |p, q| p - q, params)
}

/// `Ψ(t) = ∫ (e^{λx} + x^{-θ}) (g_A + g_B) dx` at every snapshot.
pub fn psi(a: &Trajectory, b: &Trajectory, params: &UniquenessParams) -> Result<Vec<f64>> {
    pairwise(a, b, |p, q| p + q, params)
}

/// `(C3/C2)(e^{C2 t} - 1) + C0 e^{C2 t}`; the `C2 → 0` limit `C3 t + C0` is
/// used at `C2 = 0`.
pub fn gronwall_envelope(c0: f64, c2: f64, c3: f64, t: f64) -> f64 {
    if c0 == 0.0 && c3 == 0.0 {
        return 0.0;
    }
    if c2 == 0.0 {
        return c3 * t + c0;
    }
    (c3 / c2) * (c2 * t).exp_m1() + c0 * (c2 * t).exp()
}

/// Rate `ρ` of the distance inequality with both moment constants replaced
/// by the observed supremum of `Ψ` and `k3 = k4 = max(k1 k2, k1)`.
pub fn uniqueness_rate_bound(
    psi_bar: f64,
    n_sigma_bar: f64,
    n_sigma_theta_bar: f64,
    k1: f64,
    k2: f64,
    lambda: f64,
) -> f64 {
    let k = (k1 * k2).max(k1);
    2.0 * k * 3.0 * psi_bar * lambda + psi_bar + 2.0 * k * (3.0 * psi_bar + n_sigma_bar + n_sigma_theta_bar)
}

/// Smallest `C2 ≥ 0` with `Φ(t) ≤ Φ(0) e^{C2 t}` at every sample, or `None`
/// if `Φ(0) = 0` while some later `Φ` is positive.
pub fn fit_gronwall_rate(times: &[f64], phi: &[f64]) -> Option<f64> {
    let (t0, p0) = (times[0], phi[0]);
    let mut c2: f64 = 0.0;
    for (&t, &p) in times.iter().zip(phi).skip(1) {
        if p == 0.0 {
            continue;
        }
        if p0 == 0.0 {
            return None;
        }
        c2 = c2.max((p / p0).ln() / (t - t0));
    }
    Some(c2)
}

/// One run of a refinement study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRun {
    pub n: f64,
    pub cells: usize,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub lost_mass: f64,
    pub completed: bool,
}

/// Differences between the runs at consecutive `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementDifference {
    pub n_coarse: f64,
    pub n_fine: f64,
    /// Sup over snapshots and window pivots of the zero-extended densities.
    pub sup_difference: f64,
    /// `|N_p^coarse - N_p^fine|` at the final time for `p = 0, 1, 2`.
    pub moment_differences: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementTable {
    pub window: (f64, f64),
    pub times: Vec<f64>,
    pub runs: Vec<RefinementRun>,
    pub differences: Vec<RefinementDifference>,
    /// Largest relative spread of the final `N_1` across runs.
    pub mass_spread: f64,
    /// Consecutive sup-differences are non-increasing.
    pub cauchy: bool,
}

/// Mass projection of `g0 · 1_window` with the continuous normalization over
/// the window, so every grid containing the window starts with the same
/// moments up to quadrature error.
pub fn window_projection(
    grid: Arc<GeometricGrid>,
    profile: &InitialProfile,
    normalization: Normalization,
    window: (f64, f64),
) -> Result<DensityState> {
    let (wa, wb) = window;
    let mut values = vec![0.0; grid.len()];
    match (profile, profile.density()) {
        (InitialProfile::Monodisperse { size }, _) => {
            let j = grid.locate_cell(*size)?;
            let (a, b, p) = grid.cell(j);
            values[j] = size / (p * (b - a));
        }
        (_, Some(f)) => {
            for (i, v) in values.iter_mut().enumerate() {
                let (a, b, p) = grid.cell(i);
                let (lo, hi) = (a.max(wa), b.min(wb));
                if lo < hi {
                    *v = quad::integrate(|x| x * f(x), lo, hi, 4) / (p * (b - a));
                }
            }
        }
        (_, None) => unreachable!("only the spike lacks a pointwise density"),
    }
    let mut state = DensityState::from_values(grid, values, 0.0)?;
    let (p, target) = match normalization {
        Normalization::None => return Ok(state),
        Normalization::Number(t) => (0.0, t),
        Normalization::Mass(t) => (1.0, t),
    };
    let current = match (profile, profile.density()) {
        (InitialProfile::Monodisperse { size }, _) => size.powf(p),
        (_, Some(f)) => quad::integrate_log(|x| x.powf(p) * f(x), wa, wb),
        (_, None) => unreachable!("only the spike lacks a pointwise density"),
    };
    if !(current > 0.0) {
        return Err(Error::Domain("cannot normalize an initial profile that vanishes on the window".into()));
    }
    state.scale(target / current);
    Ok(state)
}

/// Power-law kernels built from their own bound constant are rebuilt for
/// each `n`; anything else is reused as is.
fn fragmentation_for(template: &SolverConfig, n: f64) -> Result<FragmentationKernel> {
    let f = &template.fragmentation;
    if let FragmentationFamily::Powerlaw { alpha } = f.family() {
        let own = crate::kernels::powerlaw_bound_constant(alpha, f.beta(), template.n);
        if f.k2() == own && f.theta_max().is_finite() {
            return FragmentationKernel::powerlaw(alpha, f.beta(), n);
        }
    }
    Ok(f.clone())
}

/// Run `template` at every `n` in `n_list`, zero-extend each solution,
/// sample it at the pivots of the finest grid that fall inside `window`, and
/// compare consecutive runs.
pub fn refinement_study(
    template: &SolverConfig,
    n_list: &[f64],
    window: (f64, f64),
    profile: &InitialProfile,
    normalization: Normalization,
) -> Result<RefinementTable> {
    if n_list.is_empty() {
        return Err(Error::Parameter("n list must not be empty".into()));
    }
    if n_list.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Parameter("n list must be non-decreasing".into()));
    }
    let n_min = n_list[0];
    let (wa, wb) = window;
    if !(wa < wb && wa >= 1.0 / n_min * (1.0 - 1e-12) && wb <= n_min * (1.0 + 1e-12)) {
        return Err(Error::Parameter(format!(
            "window [{wa}, {wb}] must be a nonempty interval inside [1/{n_min}, {n_min}]"
        )));
    }
    let mut trajectories = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut config = template.clone();
        config.n = n;
        config.fragmentation = fragmentation_for(template, n)?;
        let g0 = window_projection(config.grid()?, profile, normalization, window)?;
        trajectories.push(solve(&config, &g0)?);
    }
    let finest = trajectories.last().expect("nonempty").snapshots[0].grid().clone();
    let probes: Vec<f64> = finest.pivots().iter().copied().filter(|&x| x >= wa && x <= wb).collect();
    let times = trajectories[0].times();

    let runs: Vec<RefinementRun> = n_list
        .iter()
        .zip(&trajectories)
        .map(|(&n, tr)| RefinementRun {
            n,
            cells: tr.snapshots[0].grid().len(),
            initial_mass: mass(&tr.snapshots[0]),
            final_mass: mass(tr.final_state()),
            lost_mass: *tr.lost_mass.last().expect("nonempty"),
            completed: tr.completed(),
        })
        .collect();

    let mut differences = Vec::with_capacity(n_list.len().saturating_sub(1));
    for (i, pair) in trajectories.windows(2).enumerate() {
        if pair[0].times() != pair[1].times() {
            return Err(Error::Contract("runs in a refinement study must share snapshot times".into()));
        }
        let mut sup: f64 = 0.0;
        for (sa, sb) in pair[0].snapshots.iter().zip(&pair[1].snapshots) {
            for &x in &probes {
                sup = sup.max((zero_extended(sa, x) - zero_extended(sb, x)).abs());
            }
        }
        let (fa, fb) = (pair[0].final_state(), pair[1].final_state());
        let moment_differences = [0.0, 1.0, 2.0].map(|p| (moment(fa, p) - moment(fb, p)).abs());
        differences.push(RefinementDifference {
            n_coarse: n_list[i],
            n_fine: n_list[i + 1],
            sup_difference: sup,
            moment_differences,
        });
    }
    let cauchy = differences.windows(2).all(|w| w[1].sup_difference <= w[0].sup_difference);
    let reference = runs[0].final_mass;
    let mass_spread = if reference == 0.0 {
        0.0
    } else {
        runs.iter().map(|r| (r.final_mass - reference).abs() / reference).fold(0.0, f64::max)
    };
    Ok(RefinementTable { window, times, runs, differences, mass_spread, cauchy })
}

/// Piecewise-constant (in log x) reading of a state, zero outside its grid.
fn zero_extended(state: &DensityState, x: f64) -> f64 {
    match state.grid().locate_cell(x) {
        Ok(i) => state.values()[i],
        Err(_) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::kernels::CollisionKernel;
    use crate::solver::EventLog;
    use crate::state::{Sampling, WeightedNormParams};

    fn a1(cpd: usize, horizon: f64) -> SolverConfig {
        SolverConfig::new(
            CollisionKernel::constant(1.0).unwrap(),
            FragmentationKernel::powerlaw(0.0, 0.5, 8.0).unwrap(),
            8.0,
            cpd,
            WeightedNormParams::new(1.0, 0.6).unwrap(),
            horizon,
        )
    }

    fn exp_state(config: &SolverConfig) -> DensityState {
        InitialProfile::Exp { rate: 1.0 }
            .build(config.grid().unwrap(), Sampling::Pivot, Normalization::Number(1.0))
            .unwrap()
    }

    fn fixed(values: &[Vec<f64>], times: &[f64], lost: &[f64]) -> Trajectory {
        let grid = Arc::new(crate::grid::build_grid(2.0, 8).unwrap());
        let snapshots = values
            .iter()
            .zip(times)
            .map(|(v, &t)| DensityState::from_values(grid.clone(), v.clone(), t).unwrap())
            .collect();
        Trajectory { snapshots, lost_mass: lost.to_vec(), events: EventLog::default(), twin: None }
    }

    #[test]
    fn single_snapshot_has_no_drift() {
        let t = fixed(&[vec![1.0; 5]], &[0.0], &[0.0]);
        assert_eq!(mass_drift(&t), 0.0);
    }

    #[test]
    fn logged_loss_accounts_for_the_drift() {
        let g = vec![1.0; 5];
        let h: Vec<f64> = g.iter().map(|v| v * 0.9).collect();
        let t0 = fixed(std::slice::from_ref(&g), &[0.0], &[0.0]);
        let m0 = mass(&t0.snapshots[0]);
        let t = fixed(&[g, h], &[0.0, 1.0], &[0.0, 0.1 * m0]);
        assert_relative_eq!(mass_drift(&t), 0.1, max_relative = 1e-12);
        assert!(mass_balance_residual(&t) < 1e-14);
    }

    #[test]
    fn drift_ignores_time_labels() {
        let g = vec![1.0; 5];
        let h: Vec<f64> = g.iter().map(|v| v * 1.01).collect();
        let a = fixed(&[g.clone(), h.clone()], &[0.0, 1.0], &[0.0, 0.0]);
        let b = fixed(&[g, h], &[0.0, 7.5], &[0.0, 0.0]);
        assert_eq!(mass_drift(&a), mass_drift(&b));
    }

    #[test]
    fn riccati_closed_form_matches_fine_integration() {
        // B0 = 0, S = 1, c = 1: k1 k2 = 1 - r.
        let env = riccati_envelope(0.0, 0.5, 0.5, 0.4, 1.0, 0.6, 0.25).unwrap();
        assert_relative_eq!(env.value(), 0.5, max_relative = 1e-14);
        let (mut b, steps) = (0.0f64, 20_000);
        let h = 0.25 / steps as f64;
        let f = |b: f64| (2.0 * b + 1.0).powi(2);
        for _ in 0..steps {
            let k1 = f(b);
            let k2 = f(b + 0.5 * h * k1);
            let k3 = f(b + 0.5 * h * k2);
            let k4 = f(b + h * k3);
            b += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert_relative_eq!(b, 0.5, max_relative = 1e-10);
        assert_eq!(
            riccati_envelope(0.0, 0.5, 0.5, 0.4, 1.0, 0.6, 0.5).unwrap(),
            Envelope::BlowUp { at: 0.5 }
        );
    }

    #[test]
    fn riccati_without_coupling_is_constant() {
        let env = riccati_envelope(3.0, 1.0, 2.0, 0.0, 1.0, 0.5, 10.0).unwrap();
        assert_eq!(env, Envelope::Finite { value: 3.0 });
        assert!(riccati_envelope(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1).is_err());
        assert!(riccati_envelope(-1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn number_envelope_dominates_the_constant_kernel_solution() {
        // N0 = 1/(1-t) solves N0' = N0² with N0(0) = 1.
        for i in 0..=10 {
            let t = 0.015 * i as f64;
            let env = number_envelope(1.0, 0.0, 1.0, 1.0, 2.0, 0.0, 0.0, t).unwrap();
            assert!(env.value() >= 1.0 / (1.0 - t));
        }
        let single = number_envelope(2.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 5.0).unwrap();
        assert_eq!(single, Envelope::Finite { value: 2.0 });
        assert!(number_envelope(1.0, 0.0, 1.0, 1.0, f64::INFINITY, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn gronwall_values() {
        assert_relative_eq!(gronwall_envelope(1.0, 1.0, 0.0, 1.0), std::f64::consts::E, max_relative = 1e-15);
        assert_eq!(gronwall_envelope(2.5, 3.0, 1.0, 0.0), 2.5);
        assert_eq!(gronwall_envelope(0.0, 1e3, 0.0, 1e3), 0.0);
        assert_relative_eq!(gronwall_envelope(0.0, 0.0, 2.0, 3.0), 6.0);
    }

    #[test]
    fn fitted_rate_reproduces_an_exponential() {
        let times = [0.0, 0.5, 1.0];
        let phi = times.map(|t: f64| 2.0 * (0.3 * t).exp());
        assert_relative_eq!(fit_gronwall_rate(&times, &phi).unwrap(), 0.3, max_relative = 1e-12);
        assert_eq!(fit_gronwall_rate(&times, &[0.0, 0.0, 0.0]), Some(0.0));
        assert_eq!(fit_gronwall_rate(&times, &[0.0, 1.0, 0.0]), None);
    }

    #[test]
    fn zero_data_passes_every_bound() {
        let t = fixed(&[vec![0.0; 5], vec![0.0; 5]], &[0.0, 0.5], &[0.0, 0.0]);
        let params =
            MomentBoundParams { r: 0.6, k1: 1.0, k2: 2.0, sigma: 0.0, nu: 0.0, theta_max: 2.0, mass_tol: 1e-6, tol: 1e-9 };
        for report in moment_bounds_check(&t, &params) {
            assert!(report.pass, "{}", report.name);
            assert!(report.observed.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn distance_contract_errors() {
        let a = fixed(&[vec![1.0; 5]], &[0.0], &[0.0]);
        let b = fixed(&[vec![1.0; 5], vec![1.0; 5]], &[0.0, 1.0], &[0.0, 0.0]);
        let u = UniquenessParams::new(1.0, 0.2, 0.0).unwrap();
        assert!(matches!(uniqueness_distance(&a, &b, &u), Err(Error::Contract(_))));
        let c = fixed(&[vec![1.0; 5]], &[0.5], &[0.0]);
        assert!(matches!(uniqueness_distance(&a, &c, &u), Err(Error::Contract(_))));
        assert_eq!(uniqueness_distance(&a, &a, &u).unwrap(), vec![0.0]);
        assert!(psi(&a, &a, &u).unwrap()[0] > 0.0);
    }

    #[test]
    fn constant_kernel_moments_stay_within_their_bounds() {
        let c = a1(16, 0.5);
        let traj = solve(&c, &exp_state(&c)).unwrap();
        let params = MomentBoundParams::from_model(&c.model().unwrap(), 0.6);
        let reports = moment_bounds_check(&traj, &params);
        let names: Vec<&str> = reports.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["mass-conservation", "energy-moment", "negative-moment", "number-moment"]);
        for r in &reports {
            assert!(r.pass, "{r:?}");
        }
        assert!(mass_drift(&traj) <= 1e-6);
    }

    #[test]
    fn perturbed_data_stay_inside_the_fitted_envelope() {
        let mut c = a1(8, 0.25);
        c.output_times = vec![0.05, 0.1, 0.15, 0.2];
        let g0 = exp_state(&c);
        let mut g1 = g0.clone();
        g1.scale(1.01);
        let (ta, tb) = (solve(&c, &g0).unwrap(), solve(&c, &g1).unwrap());
        let u = UniquenessParams::new(0.5, 0.2, 0.0).unwrap();
        let phi = uniqueness_distance(&ta, &tb, &u).unwrap();
        let psi_bar = psi(&ta, &tb, &u).unwrap().into_iter().fold(0.0, f64::max);
        let both: Vec<f64> = ta.snapshots.iter().map(|s| moment(s, -0.2)).collect();
        let c2 = uniqueness_rate_bound(psi_bar, 0.0, both.iter().copied().fold(0.0, f64::max), 1.0, 2.0, 0.5);
        let fitted = fit_gronwall_rate(&ta.times(), &phi).unwrap();
        assert!(fitted <= c2);
        for (&t, &p) in ta.times().iter().zip(&phi) {
            assert!(p <= gronwall_envelope(phi[0], c2, 0.0, t) * (1.0 + 1e-12));
            assert!(p <= gronwall_envelope(phi[0], fitted, 0.0, t) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn identical_n_gives_zero_difference() {
        let mut c = a1(8, 0.1);
        c.n = 4.0;
        c.fragmentation = FragmentationKernel::powerlaw(0.0, 0.5, 4.0).unwrap();
        let table = refinement_study(
            &c,
            &[4.0, 4.0],
            (0.25, 4.0),
            &InitialProfile::Exp { rate: 1.0 },
            Normalization::Number(1.0),
        )
        .unwrap();
        assert_eq!(table.differences.len(), 1);
        assert_eq!(table.differences[0].sup_difference, 0.0);
        assert!(table.cauchy);
    }

    #[test]
    fn refinement_rejects_bad_windows() {
        let c = a1(8, 0.1);
        let exp = InitialProfile::Exp { rate: 1.0 };
        assert!(refinement_study(&c, &[4.0, 8.0], (0.1, 4.0), &exp, Normalization::None).is_err());
        assert!(refinement_study(&c, &[8.0, 4.0], (0.25, 4.0), &exp, Normalization::None).is_err());
        assert!(refinement_study(&c, &[], (0.25, 4.0), &exp, Normalization::None).is_err());
    }

    #[test]
    fn window_projection_is_grid_independent() {
        let exp = InitialProfile::Exp { rate: 1.0 };
        let mut masses = Vec::new();
        for n in [4.0, 8.0, 16.0] {
            let grid = Arc::new(crate::grid::build_grid(n, 32).unwrap());
            let s = window_projection(grid, &exp, Normalization::Number(1.0), (0.25, 4.0)).unwrap();
            masses.push(s.moment(1.0).unwrap());
        }
        // ∫_{1/4}^4 x e^{-x} dx / ∫_{1/4}^4 e^{-x} dx
        let a = 1.25 * (-0.25f64).exp() - 5.0 * (-4.0f64).exp();
        let b = (-0.25f64).exp() - (-4.0f64).exp();
        for m in masses {
            assert_relative_eq!(m, a / b, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn riccati_is_monotone(
            b0 in 0.0f64..3.0, s1 in 0.0f64..2.0, s2 in 0.0f64..2.0,
            k1 in 0.0f64..2.0, k2 in 0.0f64..2.0, r in 0.05f64..0.95, t in 0.0f64..0.5, dt in 0.0f64..0.1,
        ) {
            let base = riccati_envelope(b0, s1, s2, k1, k2, r, t).unwrap().value();
            let later = riccati_envelope(b0, s1, s2, k1, k2, r, t + dt).unwrap().value();
            prop_assert!(later >= base);
            for bumped in [
                riccati_envelope(b0 + 0.1, s1, s2, k1, k2, r, t),
                riccati_envelope(b0, s1, s2, k1 + 0.1, k2, r, t),
                riccati_envelope(b0, s1, s2, k1, k2 + 0.1, r, t),
            ] {
                prop_assert!(bumped.unwrap().value() >= base);
            }
        }

        #[test]
        fn gronwall_zero_data_is_zero(c2 in 1e-6f64..50.0, t in 0.0f64..100.0) {
            prop_assert_eq!(gronwall_envelope(0.0, c2, 0.0, t), 0.0);
        }
    }
}
