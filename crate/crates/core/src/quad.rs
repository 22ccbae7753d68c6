//! Gauss–Legendre quadrature, including a dyadic composite rule for
//! integrands with an integrable singularity at the origin.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 12;

/// Nodes and weights on [-1, 1], computed once by Newton iteration on P_n.
fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

pub(crate) fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let n = order;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// ∫_a^b f with `pieces` equal Gauss–Legendre panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / pieces as f64;
    let mut sum = 0.0;
    for k in 0..pieces {
        let lo = a + k as f64 * h;
        let mid = lo + 0.5 * h;
        let panel: f64 = rule().iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum();
        sum += 0.5 * h * panel;
    }
    sum
}

/// ∫_a^b f over geometrically graded panels (ratio 2), for integrands that
/// vary on a logarithmic scale.
pub fn integrate_log<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a <= 0.0 {
        return integrate(f, a, b, 8);
    }
    let panels = ((b / a).log2().ceil() as usize).max(1);
    let ratio = (b / a).powf(1.0 / panels as f64);
    let mut lo = a;
    let mut sum = 0.0;
    for k in 0..panels {
        let hi = if k + 1 == panels { b } else { lo * ratio };
        sum += integrate(&f, lo, hi, 1);
        lo = hi;
    }
    sum
}

/// ∫_0^y f over dyadic panels [y 2^{-k-1}, y 2^{-k}], stopping once panel
/// contributions fall below `rel_tol` of the running sum. Integrands whose
/// panels stop shrinking are reported as divergent.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(f: F, y: f64, rel_tol: f64) -> Result<f64> {
    const MAX_PANELS: usize = 400;
    let mut sum = 0.0;
    let mut hi = y;
    let mut small_run = 0;
    for _ in 0..MAX_PANELS {
        let lo = 0.5 * hi;
        let part = integrate(&f, lo, hi, 1);
        if !part.is_finite() {
            return Err(Error::Model(format!("integrand not finite on [{lo:e}, {hi:e}]")));
        }
        sum += part;
        if part.abs() <= rel_tol * sum.abs() {
            small_run += 1;
            if small_run >= 3 {
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
        hi = lo;
    }
    Err(Error::Model(format!(
        "quadrature of ∫_0^{y} did not converge; the integral appears divergent"
    )))
}
