//! Scenario files.
//!
//! A scenario is a TOML document with one table per concern. Every quantity
//! is dimensionless. Unknown keys are rejected.
//!
//! ```toml
//! [collision]
//! kernel = "constant"        # constant | singular-product | brownian |
//! k1 = 1.0                   # cr-model-1 | cr-model-2 | cr-model-3 | custom
//!
//! [fragmentation]
//! kernel = "powerlaw"        # powerlaw | half-split
//! alpha = 0.0
//! beta = 0.5
//!
//! [grid]
//! n = 8.0
//! cells_per_decade = 32
//!
//! [time]
//! horizon = 0.5
//! output_times = [0.1, 0.25]
//! ```
//!
//! Optional tables: `[initial]`, `[norm]`, `[uniqueness]`, `[solver]`,
//! `[refine]` and `[output]`; see the field defaults below.

use std::fmt;
use std::sync::Arc;

use fragkin_core::kernels::{CollisionFamily, CollisionKernel, FragmentationKernel, SplitRule};
use fragkin_core::solver::{SlabPolicy, SolverConfig, TimeRule};
use fragkin_core::state::{InitialProfile, Normalization, Sampling, UniquenessParams, WeightedNormParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub collision: CollisionSection,
    pub fragmentation: FragmentationSection,
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    pub time: TimeSection,
    #[serde(default)]
    pub norm: NormSection,
    #[serde(default)]
    pub uniqueness: UniquenessSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionSection {
    pub kernel: String,
    #[serde(default = "one")]
    pub k1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Homogeneity index of the Cheng–Redner kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    /// `custom` is the monomial `k1 x^a y^b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentationSection {
    pub kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub beta: f64,
    /// Defaults to the exact bound constant on `[1/n, n]` for power laws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
    /// Half-split breakage rule: always | larger | smaller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: f64,
    pub cells_per_decade: usize,
    #[serde(default = "half")]
    pub taper_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// exp | monodisperse | powerlaw-cutoff
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// pivot | mass-projection
    pub sampling: String,
    /// none | number | mass
    pub normalize: String,
    pub target: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            preset: "exp".into(),
            rate: None,
            size: None,
            exponent: None,
            cutoff: None,
            sampling: "pivot".into(),
            normalize: "number".into(),
            target: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    #[serde(default)]
    pub output_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSection {
    pub lambda: f64,
    pub r: f64,
}

impl Default for NormSection {
    fn default() -> Self {
        Self { lambda: 1.0, r: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessSection {
    pub lambda: f64,
    pub theta: f64,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        Self { lambda: 1.0, theta: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// adaptive | analytic-t0
    pub slab_policy: String,
    pub slab_initial: f64,
    pub slab_max: f64,
    /// chebyshev-lobatto | trapezoid
    pub time_rule: String,
    pub time_nodes: usize,
    pub cross_check: bool,
    pub rk4_dt: f64,
    pub max_slabs: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            picard_tol: 1e-12,
            picard_max_iter: 200,
            slab_policy: "adaptive".into(),
            slab_initial: 1e-3,
            slab_max: 0.125,
            time_rule: "chebyshev-lobatto".into(),
            time_nodes: 16,
            cross_check: false,
            rk4_dt: 1e-3,
            max_slabs: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    #[serde(default)]
    pub n_list: Vec<f64>,
    /// Defaults to `[1/min n, min n]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

/// A rejected scenario, addressed by its dotted field path and, when the
/// key appears in the source, its line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}, {}: {}", self.field, self.message),
            None if self.field.is_empty() => write!(f, "{}", self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), line: None, message: message.into() }
}

/// Strip the error-kind prefix from core parameter messages.
fn core_message(e: fragkin_core::Error) -> String {
    match e {
        fragkin_core::Error::Parameter(m) | fragkin_core::Error::Domain(m) => m,
        other => other.to_string(),
    }
}

fn required(field: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    v.ok_or_else(|| invalid(field, "missing value"))
}

/// A scenario with every module-level precondition checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub solver: SolverConfig,
    pub profile: InitialProfile,
    pub sampling: Sampling,
    pub normalization: Normalization,
    pub uniqueness: UniquenessParams,
}

impl ScenarioConfig {
    /// Parse and validate; validation errors carry the source line.
    pub fn parse(text: &str) -> Result<(Self, Scenario), ConfigError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError { field: String::new(), line: None, message: e.to_string() })?;
        let scenario = config.build().map_err(|mut e| {
            e.line = locate(text, &e.field);
            e
        })?;
        Ok((config, scenario))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable in TOML")
    }

    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let collision = self.collision_kernel()?;
        let n = self.grid.n;
        if !(n > 1.0 && n.is_finite()) {
            return Err(invalid("grid.n", format!("truncation index must exceed 1, got {n}")));
        }
        if self.grid.cells_per_decade == 0 {
            return Err(invalid("grid.cells_per_decade", "must be at least 1"));
        }
        if !(self.grid.taper_fraction > 0.0 && self.grid.taper_fraction <= 1.0) {
            return Err(invalid(
                "grid.taper_fraction",
                format!("must lie in (0, 1], got {}", self.grid.taper_fraction),
            ));
        }
        let fragmentation = self.fragmentation_kernel()?;
        let norm = WeightedNormParams::new(self.norm.lambda, self.norm.r).map_err(|e| {
            let field = if self.norm.lambda > 0.0 { "norm.r" } else { "norm.lambda" };
            invalid(field, core_message(e))
        })?;
        let uniqueness = UniquenessParams::new(self.uniqueness.lambda, self.uniqueness.theta, collision.sigma())
            .map_err(|e| {
                let field = if self.uniqueness.lambda >= 0.0 { "uniqueness.theta" } else { "uniqueness.lambda" };
                invalid(field, core_message(e))
            })?;

        let mut solver = SolverConfig::new(collision, fragmentation, n, self.grid.cells_per_decade, norm, self.time.horizon);
        solver.taper_fraction = self.grid.taper_fraction;
        solver.output_times = self.time.output_times.clone();
        let s = &self.solver;
        solver.picard_tol = s.picard_tol;
        solver.picard_max_iter = s.picard_max_iter;
        solver.slab_policy = match s.slab_policy.as_str() {
            "adaptive" => SlabPolicy::Adaptive { initial: s.slab_initial, max: s.slab_max },
            "analytic-t0" => SlabPolicy::AnalyticT0,
            other => {
                return Err(invalid("solver.slab_policy", format!("expected adaptive or analytic-t0, got {other:?}")))
            }
        };
        solver.time_rule = match s.time_rule.as_str() {
            "chebyshev-lobatto" => TimeRule::ChebyshevLobatto { nodes: s.time_nodes },
            "trapezoid" => TimeRule::Trapezoid { substeps: s.time_nodes },
            other => {
                return Err(invalid(
                    "solver.time_rule",
                    format!("expected chebyshev-lobatto or trapezoid, got {other:?}"),
                ))
            }
        };
        solver.cross_check = s.cross_check;
        solver.rk4_dt = s.rk4_dt;
        solver.max_slabs = s.max_slabs;
        solver.validate().map_err(|e| {
            let m = core_message(e);
            invalid(solver_field(&m), m)
        })?;

        let (profile, sampling, normalization) = self.initial_data()?;
        self.check_refine()?;
        Ok(Scenario { solver, profile, sampling, normalization, uniqueness })
    }

    fn collision_kernel(&self) -> Result<CollisionKernel, ConfigError> {
        let c = &self.collision;
        let family = CollisionFamily::from_preset_name(&c.kernel).ok_or_else(|| {
            let names: Vec<&str> = CollisionFamily::PRESETS.iter().map(|f| f.preset_name()).collect();
            invalid("collision.kernel", format!("unknown kernel {:?}; expected one of {}, custom", c.kernel, names.join(", ")))
        })?;
        let bound_field = |m: &str| {
            if m.starts_with("sigma") {
                "collision.sigma"
            } else if m.starts_with("nu") {
                "collision.nu"
            } else if m.starts_with("xi") {
                "collision.xi"
            } else {
                "collision.k1"
            }
        };
        let wrap = |e: fragkin_core::Error| {
            let m = core_message(e);
            invalid(bound_field(&m), m)
        };
        match family {
            CollisionFamily::Constant => CollisionKernel::constant(c.k1).map_err(wrap),
            CollisionFamily::SingularProduct => {
                CollisionKernel::singular_product(c.k1, c.sigma.unwrap_or(0.0), c.nu.unwrap_or(0.0)).map_err(wrap)
            }
            CollisionFamily::Brownian => CollisionKernel::brownian(c.k1).map_err(wrap),
            CollisionFamily::ChengRednerI | CollisionFamily::ChengRednerII | CollisionFamily::ChengRednerIII => {
                let xi = required("collision.xi", c.xi)?;
                CollisionKernel::cheng_redner(family, c.k1, xi)
                    .map_err(|e| invalid("collision.xi", core_message(e)))
            }
            CollisionFamily::Custom => {
                let a = required("collision.x_exponent", c.x_exponent)?;
                let b = required("collision.y_exponent", c.y_exponent)?;
                let k1 = c.k1;
                let rate = Arc::new(move |x: f64, y: f64| k1 * x.powf(a) * y.powf(b));
                CollisionKernel::custom(k1, c.sigma.unwrap_or(0.0), c.nu.unwrap_or(0.0), rate).map_err(wrap)
            }
        }
    }

    fn fragmentation_kernel(&self) -> Result<FragmentationKernel, ConfigError> {
        let f = &self.fragmentation;
        let field = |m: &str| {
            if m.starts_with("alpha") {
                "fragmentation.alpha"
            } else if m.starts_with("k2") {
                "fragmentation.k2"
            } else if m.starts_with("theta") {
                "fragmentation.theta_max"
            } else {
                "fragmentation.beta"
            }
        };
        let wrap = |e: fragkin_core::Error| {
            let m = core_message(e);
            invalid(field(&m), m)
        };
        match f.kernel.as_str() {
            "powerlaw" => {
                let alpha = f.alpha.unwrap_or(0.0);
                match (f.k2, f.theta_max) {
                    (None, None) => FragmentationKernel::powerlaw(alpha, f.beta, self.grid.n).map_err(wrap),
                    (k2, theta) => {
                        let k2 = k2.unwrap_or_else(|| {
                            fragkin_core::kernels::powerlaw_bound_constant(alpha, f.beta, self.grid.n)
                        });
                        let theta = theta.unwrap_or((alpha + 2.0) / (alpha + 1.0));
                        FragmentationKernel::powerlaw_with(alpha, k2, f.beta, theta).map_err(wrap)
                    }
                }
            }
            "half-split" => {
                let name = f.rule.as_deref().unwrap_or("always");
                let rule = SplitRule::from_name(name).ok_or_else(|| {
                    invalid("fragmentation.rule", format!("expected always, larger or smaller, got {name:?}"))
                })?;
                FragmentationKernel::half_split(rule, f.k2.unwrap_or(2.0), f.beta).map_err(wrap)
            }
            other => Err(invalid("fragmentation.kernel", format!("expected powerlaw or half-split, got {other:?}"))),
        }
    }

    fn initial_data(&self) -> Result<(InitialProfile, Sampling, Normalization), ConfigError> {
        let i = &self.initial;
        let profile = match i.preset.as_str() {
            "exp" => InitialProfile::Exp { rate: i.rate.unwrap_or(1.0) },
            "monodisperse" => InitialProfile::Monodisperse { size: required("initial.size", i.size)? },
            "powerlaw-cutoff" => InitialProfile::PowerlawCutoff {
                exponent: required("initial.exponent", i.exponent)?,
                cutoff: required("initial.cutoff", i.cutoff)?,
            },
            other => {
                return Err(invalid(
                    "initial.preset",
                    format!("expected exp, monodisperse or powerlaw-cutoff, got {other:?}"),
                ))
            }
        };
        let sampling = match i.sampling.as_str() {
            "pivot" => Sampling::Pivot,
            "mass-projection" => Sampling::MassProjection,
            other => return Err(invalid("initial.sampling", format!("expected pivot or mass-projection, got {other:?}"))),
        };
        if !(i.target >= 0.0 && i.target.is_finite()) {
            return Err(invalid("initial.target", format!("must be nonnegative and finite, got {}", i.target)));
        }
        let normalization = match i.normalize.as_str() {
            "none" => Normalization::None,
            "number" => Normalization::Number(i.target),
            "mass" => Normalization::Mass(i.target),
            other => return Err(invalid("initial.normalize", format!("expected none, number or mass, got {other:?}"))),
        };
        if let InitialProfile::Monodisperse { size } = profile {
            let n = self.grid.n;
            if !(size >= 1.0 / n && size <= n) {
                return Err(invalid("initial.size", format!("must lie in [1/n, n] = [{}, {n}], got {size}", 1.0 / n)));
            }
        }
        Ok((profile, sampling, normalization))
    }

    fn check_refine(&self) -> Result<(), ConfigError> {
        if self.refine.n_list.iter().any(|&n| !(n > 1.0 && n.is_finite())) {
            return Err(invalid("refine.n_list", "every truncation index must exceed 1"));
        }
        if let Some([a, b]) = self.refine.window {
            if !(a > 0.0 && a < b) {
                return Err(invalid("refine.window", format!("must be an interval [a, b] with 0 < a < b, got [{a}, {b}]")));
            }
        }
        Ok(())
    }
}

fn solver_field(message: &str) -> &'static str {
    const KEYS: [(&str, &str); 8] = [
        ("picard_tol", "solver.picard_tol"),
        ("picard_max_iter", "solver.picard_max_iter"),
        ("horizon", "time.horizon"),
        ("norm exponent", "norm.r"),
        ("output time", "time.output_times"),
        ("adaptive", "solver.slab_initial"),
        ("rk4_dt", "solver.rk4_dt"),
        ("max_slabs", "solver.max_slabs"),
    ];
    KEYS.iter().find(|(k, _)| message.contains(k)).map_or("solver.time_nodes", |(_, f)| f)
}

/// Line of `key = ...` inside `[table]`, 1-based.
fn locate(text: &str, field: &str) -> Option<usize> {
    let (table, key) = field.split_once('.')?;
    let mut current = "";
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim();
        } else if current == table {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}
