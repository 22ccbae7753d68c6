//! Sampled checks of the kernel hypotheses on a size interval.

use serde::Serialize;

use super::{CollisionKernel, FragmentationKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Informational; never fails the report.
    Warning,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Worst observed ratio of value to bound (or relative error for identities).
    pub worst_ratio: Option<f64>,
    /// Arguments at which the worst ratio (or the first violation) occurred.
    pub witness: Option<Vec<f64>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub domain: (f64, f64),
    pub samples: usize,
    pub tolerance: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tracks the worst ratio seen and the first point that broke the bound.
struct Worst {
    ratio: f64,
    at: Vec<f64>,
    violation: Option<Vec<f64>>,
}

impl Worst {
    fn new() -> Self {
        Self { ratio: f64::NEG_INFINITY, at: Vec::new(), violation: None }
    }

    fn observe(&mut self, ratio: f64, at: &[f64], violated: bool) {
        if ratio > self.ratio || ratio.is_nan() {
            self.ratio = ratio;
            self.at = at.to_vec();
        }
        if violated && self.violation.is_none() {
            self.violation = Some(at.to_vec());
        }
    }

    fn into_check(self, name: &'static str, note: Option<String>) -> HypothesisCheck {
        let failed = self.violation.is_some();
        HypothesisCheck {
            name,
            status: if failed { CheckStatus::Fail } else { CheckStatus::Pass },
            worst_ratio: self.ratio.is_finite().then_some(self.ratio),
            witness: Some(self.violation.unwrap_or(self.at)),
            note,
        }
    }
}

fn lattice(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    if samples <= 1 || lo == hi {
        return vec![(lo * hi).sqrt()];
    }
    let ratio = (hi / lo).ln() / (samples - 1) as f64;
    (0..samples)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == samples => hi,
            i => lo * (ratio * i as f64).exp(),
        })
        .collect()
}

/// Checks symmetry, positivity and the singular bound of the collision
/// kernel; positivity, the `k2 / y^β` bound, the mass identity and the
/// fragment count of the fragmentation kernel; and the exponent ordering
/// `0 < β ≤ σ`. Samples a log-spaced lattice with `samples` points per axis. Violations are report entries, never errors.
pub fn verify_hypotheses(
    cspec: &CollisionKernel,
    fspec: &FragmentationKernel,
    domain: (f64, f64),
    samples: usize,
    tol: f64,
) -> HypothesisReport {
    let pts = lattice(domain.0, domain.1, samples.max(1));
    let mut checks = Vec::new();

    let mut positive = Worst::new();
    let mut symmetry = Worst::new();
    let mut h3 = Worst::new();
    for &x in &pts {
        for &y in &pts {
            let c = cspec.rate(x, y);
            positive.observe(if c.is_finite() { 0.0 } else { f64::INFINITY }, &[x, y], !(c >= 0.0 && c.is_finite()));
            let swapped = cspec.rate(y, x);
            let asym = (c - swapped).abs() / c.abs().max(swapped.abs()).max(f64::MIN_POSITIVE);
            symmetry.observe(asym, &[x, y], asym > tol);
            let bound = cspec.bound(x, y);
            let ratio = if bound > 0.0 { c / bound } else if c == 0.0 { 0.0 } else { f64::INFINITY };
            h3.observe(ratio, &[x, y], ratio > 1.0 + tol);
        }
    }
    checks.push(positive.into_check("collision-nonnegative-finite", None));
    checks.push(symmetry.into_check("collision-symmetry", None));
    checks.push(h3.into_check(
        "collision-bound",
        Some(format!(
            "C(x,y) <= k1 (1+x)^nu (1+y)^nu / (xy)^sigma with k1 = {}, sigma = {}, nu = {}",
            cspec.k1(),
            cspec.sigma(),
            cspec.nu()
        )),
    ));

    if fspec.is_delta() {
        let na = |name, why: &str| HypothesisCheck {
            name,
            status: CheckStatus::NotApplicable,
            worst_ratio: None,
            witness: None,
            note: Some(why.to_string()),
        };
        checks.push(na("fragmentation-nonnegative-finite", "delta kernel has no pointwise density"));
        checks.push(na("fragmentation-bound", "delta kernel has no pointwise density; only its discretization is used"));
        checks.push(HypothesisCheck {
            name: "mass-identity",
            status: CheckStatus::Pass,
            worst_ratio: Some(0.0),
            witness: None,
            note: Some("exact: daughters 2 x (y/2) or 1 x y".into()),
        });
    } else {
        let mut positive = Worst::new();
        let mut h4 = Worst::new();
        for &z in &pts {
            for (j, &y) in pts.iter().enumerate() {
                for &x in &pts[..j] {
                    let f = fspec.density(x, y, z);
                    positive.observe(0.0, &[x, y, z], !(f >= 0.0 && f.is_finite()));
                    let bound = fspec.k2() / y.powf(fspec.beta());
                    let ratio = if bound > 0.0 { f / bound } else if f == 0.0 { 0.0 } else { f64::INFINITY };
                    h4.observe(ratio, &[x, y, z], ratio > 1.0 + tol);
                }
            }
        }
        let mut note = format!("F(x,y|z) <= k2 / y^beta with k2 = {}, beta = {}", fspec.k2(), fspec.beta());
        if let Some((a, b)) = fspec.valid_domain() {
            let outside = domain.0 < a * (1.0 - 1e-12) || domain.1 > b * (1.0 + 1e-12);
            if outside && h4.violation.is_some() {
                note = format!("{note}; holds only on truncated domain [{a}, {b}]");
            } else {
                note = format!("{note}; valid on the truncated domain [{a}, {b}]");
            }
        }
        checks.push(positive.into_check("fragmentation-nonnegative-finite", None));
        checks.push(h4.into_check("fragmentation-bound", Some(note)));

        let mut mass = Worst::new();
        let mut mass_note = None;
        for &z in pts.iter().step_by((pts.len() / 4).max(1)) {
            for &y in &pts {
                match fspec.mass_by_quadrature(y, z) {
                    Ok(m) => {
                        let err = (m - y).abs() / y;
                        mass.observe(err, &[y, z], err > tol);
                    }
                    Err(e) => {
                        mass.observe(f64::INFINITY, &[y, z], true);
                        mass_note.get_or_insert_with(|| e.to_string());
                    }
                }
            }
        }
        checks.push(mass.into_check("mass-identity", mass_note.or(Some("generic quadrature route".into()))));
    }

    let mut count = Worst::new();
    let mut count_note = None;
    for &z in pts.iter().step_by((pts.len() / 4).max(1)) {
        for &y in &pts {
            match fspec.fragment_count(y, z) {
                Ok(theta) => {
                    let ratio = theta / fspec.theta_max();
                    count.observe(ratio, &[y, z], !theta.is_finite() || ratio > 1.0 + tol);
                }
                Err(e) => {
                    count.observe(f64::INFINITY, &[y, z], true);
                    count_note.get_or_insert_with(|| e.to_string());
                }
            }
        }
    }
    checks.push(count.into_check(
        "fragment-count",
        count_note.or(Some(format!("theta(y,z) <= theta_max = {}", fspec.theta_max()))),
    ));

    let (beta, sigma) = (fspec.beta(), cspec.sigma());
    checks.push(if beta > 0.0 && beta <= sigma {
        HypothesisCheck {
            name: "exponent-ordering",
            status: CheckStatus::Pass,
            worst_ratio: Some(beta / sigma),
            witness: None,
            note: None,
        }
    } else if sigma == 0.0 && beta > 0.0 {
        HypothesisCheck {
            name: "exponent-ordering",
            status: CheckStatus::Warning,
            worst_ratio: None,
            witness: None,
            note: Some(format!(
                "0 < beta <= sigma is vacuous for a collision kernel bounded at the origin (sigma = 0, beta = {beta})"
            )),
        }
    } else {
        HypothesisCheck {
            name: "exponent-ordering",
            status: CheckStatus::Fail,
            worst_ratio: (sigma > 0.0).then(|| beta / sigma),
            witness: Some(vec![beta, sigma]),
            note: Some(format!("requires 0 < beta <= sigma, got beta = {beta}, sigma = {sigma}")),
        }
    });

    HypothesisReport { domain, samples, tolerance: tol, checks }
}
