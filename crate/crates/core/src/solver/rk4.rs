//! Classical explicit Runge–Kutta step of the truncated equation, used as an
//! independent check on the fixed-point integrator.

use crate::solver::rhs::{DiscreteModel, Rates};

#[derive(Debug, Clone, Default)]
pub struct Rk4Step {
    pub values: Vec<f64>,
    /// `Σ |negative part| · width` removed by clamping.
    pub clamped: f64,
    /// Mass that left the grid during the step.
    pub lost_mass: f64,
}

pub fn rk4_step(model: &DiscreteModel, g: &[f64], dt: f64) -> Rk4Step {
    let n = g.len();
    let mut ws = Rates::default();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut losses = [0.0; 4];
    let mut stage = vec![0.0; n];
    let coeff = [0.0, 0.5, 0.5, 1.0];
    for s in 0..4 {
        let (done, rest) = k.split_at_mut(s);
        if s == 0 {
            stage.copy_from_slice(g);
        } else {
            let prev = &done[s - 1];
            for i in 0..n {
                stage[i] = g[i] + coeff[s] * dt * prev[i];
            }
        }
        losses[s] = model.derivative(&stage, &mut ws, &mut rest[0]);
    }
    let widths = model.grid().widths();
    let mut values = vec![0.0; n];
    let mut clamped = 0.0;
    for i in 0..n {
        let v = g[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        if v < 0.0 {
            clamped += -v * widths[i];
        } else {
            values[i] = v;
        }
    }
    let lost_mass = dt / 6.0 * (losses[0] + 2.0 * losses[1] + 2.0 * losses[2] + losses[3]);
    Rk4Step { values, clamped, lost_mass }
}
