//! The benchmark plant
//!
//! ```text
//! ẋ1 = μ x1
//! ẋ2 = λ (x2 − x1⁴ + 2 x1²) + u
//! ```
//!
//! driven by a sum-of-sinusoids probing input inside a finite window and by
//! `u = 0` outside it. With `ξ = (x1, x2, x1², x1⁴)` the lifted dynamics are
//! exactly linear, which gives a ground-truth Koopman pair for tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::ode::Rk4;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlantParams {
    pub mu: f64,
    pub lambda: f64,
    /// Probing is active for `t_on < t <= t_off`.
    pub probe_on: f64,
    pub probe_off: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self { mu: -1.0, lambda: -1.0, probe_on: 0.0, probe_off: 0.5 }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.probe_on < self.probe_off) {
            return Err(Error::InvalidParameter(alloc::format!(
                "probe window must satisfy t_on < t_off, got ({}, {})",
                self.probe_on,
                self.probe_off
            )));
        }
        if !self.mu.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("mu and lambda must be finite".into()));
        }
        Ok(())
    }

    pub fn in_probe_window(&self, t: f64) -> bool {
        t > self.probe_on && t <= self.probe_off
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlantState {
    pub x: [f64; 2],
    pub t: f64,
}

/// The eleven-term probing signal, without windowing.
pub fn probing_signal(t: f64) -> f64 {
    use libm::{cos, sin};
    let p = |v: f64, k: i32| -> f64 { libm::pow(v, f64::from(k)) };
    0.4 * p(sin(0.1 * t), 6) * cos(1.5 * t)
        + 0.3 * p(sin(2.3 * t), 4) * cos(0.7 * t)
        + 0.4 * p(sin(2.6 * t), 5)
        + 0.7 * p(sin(3.0 * t), 2) * cos(4.0 * t)
        + 0.3 * sin(0.3 * t) * p(cos(1.2 * t), 2)
        + 0.4 * p(sin(1.12 * t), 3)
        + 0.5 * cos(2.4 * t) * p(sin(8.0 * t), 2)
        + 0.3 * sin(t) * p(cos(0.8 * t), 2)
        + 0.3 * p(sin(4.0 * t), 3)
        + 0.4 * cos(2.0 * t) * p(sin(5.0 * t), 8)
        + 0.4 * p(sin(3.5 * t), 5)
}

/// Applied input: the probing signal inside the probe window, `0` elsewhere.
pub fn probing_input(t: f64, params: &PlantParams) -> f64 {
    if params.in_probe_window(t) {
        probing_signal(t)
    } else {
        0.0
    }
}

pub fn plant_derivative(params: &PlantParams, x: &[f64], u: f64, dx: &mut [f64]) {
    let x1 = x[0];
    let x1sq = x1 * x1;
    dx[0] = params.mu * x1;
    dx[1] = params.lambda * (x[1] - x1sq * x1sq + 2.0 * x1sq) + u;
}

/// One RK4 step with the input held at `u`.
pub fn step_true_system(state: PlantState, u: f64, dt: f64, params: &PlantParams) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("dt must be positive, got {dt}")));
    }
    let mut x = state.x;
    Rk4::new(2).step(|_, y, dy| plant_derivative(params, y, u, dy), state.t, &mut x, dt);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence { t: state.t + dt, what: "plant state" });
    }
    Ok(PlantState { x, t: state.t + dt })
}

/// Exact lifted pair `(A*, B*)` for the library `{x1, x2, x1², x1⁴}`.
pub fn true_koopman(params: &PlantParams) -> (Matrix, Vec<f64>) {
    let (mu, lam) = (params.mu, params.lambda);
    let a = Matrix::from_rows(&[
        &[mu, 0.0, 0.0, 0.0],
        &[0.0, lam, 2.0 * lam, -lam],
        &[0.0, 0.0, 2.0 * mu, 0.0],
        &[0.0, 0.0, 0.0, 4.0 * mu],
    ]);
    (a, vec![0.0, 1.0, 0.0, 0.0])
}

/// Maps the scalar input into the `m`-dimensional vector `Ψ(u)` seen by the
/// lifted model.
pub trait InputMap: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, u: f64, out: &mut [f64]);
}

/// `Ψ(u) = u`
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityInput;

impl InputMap for IdentityInput {
    fn dim(&self) -> usize {
        1
    }

    fn apply(&self, u: f64, out: &mut [f64]) {
        out[0] = u;
    }
}
