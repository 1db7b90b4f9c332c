//! Fixed-step classical Runge–Kutta.

use alloc::vec;
use alloc::vec::Vec;

/// Scratch buffers for [`Rk4::step`], reused across steps.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `y` from `t` to `t + dt` in place. `f(t, y, dy)` writes the
    /// derivative into `dy`.
    pub fn step<F>(&mut self, mut f: F, t: f64, y: &mut [f64], dt: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        debug_assert_eq!(n, self.k1.len());
        let half = 0.5 * dt;
        f(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        f(t + half, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        f(t + half, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for i in 0..n {
            y[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}
