//! Finite-time batch-online Koopman identifier.
//!
//! The estimate is kept as `W = Σ̂ᵀ = [Â B̂]` (`n × (n+m)`). Its vectorization
//! is the column stack of `W`, which makes `(h̄ᵀ ⊗ I) vec(W) = W h̄`.
//!
//! With `E = ē h̄ᵀ + Σ_j ē_j h̄_jᵀ` and `G = h̄ h̄ᵀ + Σ_j h̄_j h̄_jᵀ` the combined
//! regressor-weighted error is `g = vec(E)`, the full-space matrix
//! `2𝐀 = G ⊗ I`, and `(2𝐀)^k g = vec(E G^k)`. The update law
//!
//! ```text
//! F = −α ‖g‖ (2𝐀)^r g / (δ + gᵀ (2𝐀)^{r+1} g)
//! ```
//!
//! drives `‖g‖` to zero at constant rate `α` (for `δ = 0` and frozen data),
//! so the settling time is `‖g(0)‖ / α`.

mod run;

pub use run::{
    integrate_identifier, integrate_static, RunConfig, RunOutcome, RunSummary, StackPolicy, StaticTrace, StepLog,
};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filters::NormalizedSnapshot;
use crate::linalg::{dot, Matrix};
use crate::memory::HistoryStack;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KoopmanEstimate {
    /// `[Â B̂]`, `n_xi × (n_xi + m)`.
    ab: Matrix,
}

impl KoopmanEstimate {
    pub fn zeros(n_xi: usize, m: usize) -> Self {
        Self { ab: Matrix::zeros(n_xi, n_xi + m) }
    }

    /// From `[Â B̂]`.
    pub fn from_ab(ab: Matrix) -> Self {
        assert!(ab.cols() >= ab.rows(), "[A B] needs at least n columns");
        Self { ab }
    }

    pub fn from_parts(a: &Matrix, b: &Matrix) -> Self {
        assert_eq!(a.rows(), a.cols());
        assert_eq!(a.rows(), b.rows());
        let n = a.rows();
        let m = b.cols();
        let mut ab = Matrix::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                ab[(i, j)] = a[(i, j)];
            }
            for j in 0..m {
                ab[(i, n + j)] = b[(i, j)];
            }
        }
        Self { ab }
    }

    pub fn n_xi(&self) -> usize {
        self.ab.rows()
    }

    pub fn m(&self) -> usize {
        self.ab.cols() - self.ab.rows()
    }

    /// `Σ̂ᵀ = [Â B̂]`
    pub fn ab(&self) -> &Matrix {
        &self.ab
    }

    pub fn ab_mut(&mut self) -> &mut Matrix {
        &mut self.ab
    }

    /// `Σ̂`, `(n_xi + m) × n_xi`.
    pub fn sigma(&self) -> Matrix {
        self.ab.transpose()
    }

    pub fn a_hat(&self) -> Matrix {
        let n = self.n_xi();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = self.ab[(i, j)];
            }
        }
        a
    }

    pub fn b_hat(&self) -> Matrix {
        let (n, m) = (self.n_xi(), self.m());
        let mut b = Matrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                b[(i, j)] = self.ab[(i, n + j)];
            }
        }
        b
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.ab.vec_columns()
    }

    pub fn from_vec(n_xi: usize, m: usize, v: &[f64]) -> Result<Self> {
        if v.len() != n_xi * (n_xi + m) {
            return Err(Error::Dimension { expected: n_xi * (n_xi + m), found: v.len() });
        }
        Ok(Self { ab: Matrix::from_vec_columns(n_xi, n_xi + m, v) })
    }

    /// `Σ̂ᵀ h̄`
    pub fn apply(&self, h_bar: &[f64]) -> Vec<f64> {
        self.ab.matvec(h_bar)
    }

    /// `self − other`, i.e. `Σ̃ᵀ` when `other` is the truth.
    pub fn error_from(&self, other: &KoopmanEstimate) -> Matrix {
        let mut d = self.ab.clone();
        d.add_assign(&other.ab.scaled(-1.0));
        d
    }
}

/// How the flow is advanced while the data are frozen over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Integrator {
    /// Classical RK4 substeps of `dt_flow`; at `δ = 0` a substep that does
    /// not decrease `V` is halved.
    #[default]
    Rk4,
    /// Follows the closed-form path `E(s) = E₀ exp(−G^{r+1} s)` in the
    /// eigenbasis of `G` and only solves for the scalar `s` reached after
    /// the step. Unaffected by the stiffness of an ill-conditioned `G`.
    ExactPath,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowConfig {
    pub alpha: f64,
    pub r: u32,
    pub delta: f64,
    pub dt_flow: f64,
    pub integrator: Integrator,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { alpha: 3.0, r: 0, delta: 1e-6, dt_flow: 1e-4, integrator: Integrator::Rk4 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.dt_flow > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("dt_flow must be positive, got {}", self.dt_flow)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBundle {
    /// `ē(t) = Σ̂ᵀ h̄(t) − ȳ(t)`
    pub e_now: Vec<f64>,
    /// `ē(t, t_j) = Σ̂ᵀ h̄_j − y_j`
    pub e_stored: Vec<Vec<f64>>,
    /// `E = ē h̄ᵀ + Σ_j ē_j h̄_jᵀ`; `g = vec(E)`.
    pub e_matrix: Matrix,
    /// `G = h̄ h̄ᵀ + Σ_j h̄_j h̄_jᵀ`
    pub g_small: Matrix,
}

impl ResidualBundle {
    pub fn g(&self) -> Vec<f64> {
        self.e_matrix.vec_columns()
    }

    /// `‖g‖`, the normed error of the regret analysis.
    pub fn g_norm(&self) -> f64 {
        self.e_matrix.frobenius_norm()
    }

    /// `V = ‖g‖²`
    pub fn lyapunov(&self) -> f64 {
        let n = self.g_norm();
        n * n
    }
}

pub fn residuals(est: &KoopmanEstimate, snap: &NormalizedSnapshot, stack: &HistoryStack) -> Result<ResidualBundle> {
    let d = est.n_xi() + est.m();
    if snap.h_bar.len() != d {
        return Err(Error::Dimension { expected: d, found: snap.h_bar.len() });
    }
    if stack.regressor_dim() != d || stack.target_dim() != est.n_xi() {
        return Err(Error::Dimension { expected: d, found: stack.regressor_dim() });
    }
    let residual = |h: &[f64], y: &[f64]| -> Vec<f64> {
        let mut e = est.apply(h);
        for (ei, yi) in e.iter_mut().zip(y) {
            *ei -= yi;
        }
        e
    };
    let y_now = snap.target();
    let e_now = residual(&snap.h_bar, &y_now);
    let mut e_matrix = Matrix::outer(&e_now, &snap.h_bar);
    let mut g_small = Matrix::outer(&snap.h_bar, &snap.h_bar);
    let mut e_stored = Vec::with_capacity(stack.len());
    for s in stack.samples() {
        let e = residual(&s.h_bar, &s.y);
        e_matrix.add_outer(1.0, &e, &s.h_bar);
        g_small.add_outer(1.0, &s.h_bar, &s.h_bar);
        e_stored.push(e);
    }
    Ok(ResidualBundle { e_now, e_stored, e_matrix, g_small })
}

/// Update direction in matrix form, `d[Â B̂]/dt`, from `E` and `G`.
pub(crate) fn flow_matrix(e: &Matrix, g: &Matrix, g_pow_r: Option<&Matrix>, cfg: &FlowConfig) -> Result<Matrix> {
    let e_norm = e.frobenius_norm();
    let p = match g_pow_r {
        Some(gr) => e.matmul(gr),
        None => e.clone(),
    };
    let q = p.matmul(g).frobenius_dot(e);
    let denom = cfg.delta + q;
    if cfg.delta == 0.0 && !(q > 0.0) {
        return Err(Error::SingularFlow { denominator: q });
    }
    if e_norm == 0.0 {
        return Ok(Matrix::zeros(e.rows(), e.cols()));
    }
    Ok(p.scaled(-cfg.alpha * e_norm / denom))
}

/// `dΣ̂_vec/dt` for the given residuals.
pub fn flow(rb: &ResidualBundle, cfg: &FlowConfig) -> Result<Vec<f64>> {
    let gr = (cfg.r > 0).then(|| rb.g_small.pow(cfg.r));
    Ok(flow_matrix(&rb.e_matrix, &rb.g_small, gr.as_ref(), cfg)?.vec_columns())
}

/// `t* = ‖g(t_a)‖ / α`
pub fn settling_time(g0_norm: f64, alpha: f64) -> f64 {
    g0_norm / alpha
}

/// Trapezoidal `∫ ‖g‖ dτ` over `[from, to]` from `(t, ‖g‖)` samples sorted by
/// time, interpolating linearly at the window edges.
pub fn regret(points: &[(f64, f64)], from: f64, to: f64) -> f64 {
    if to <= from || points.len() < 2 {
        return 0.0;
    }
    let interp = |(t0, v0): (f64, f64), (t1, v1): (f64, f64), t: f64| {
        if t1 == t0 {
            v0
        } else {
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    };
    let mut total = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lo = a.0.max(from);
        let hi = b.0.min(to);
        if hi <= lo {
            continue;
        }
        let va = interp(a, b, lo);
        let vb = interp(a, b, hi);
        total += 0.5 * (va + vb) * (hi - lo);
    }
    total
}

/// Identification cost `J = ½ (ēᵀē + Σ_j ē_jᵀē_j)` and its gradient with
/// respect to `Σ̂_vec`, which is `g = Σ_j (h̄_j ⊗ I) ē_j`.
pub fn identification_cost(
    est: &KoopmanEstimate,
    snap: &NormalizedSnapshot,
    stack: &HistoryStack,
) -> Result<(f64, Vec<f64>)> {
    let rb = residuals(est, snap, stack)?;
    let j = dot(&rb.e_now, &rb.e_now) + rb.e_stored.iter().map(|e| dot(e, e)).sum::<f64>();
    Ok((0.5 * j, rb.g()))
}

/// `(2𝐀) Σ̃_vec = vec(Σ̃ᵀ G)` given the true pair; equals `g` for exact data.
pub fn gradient_from_truth(
    est: &KoopmanEstimate,
    truth: &KoopmanEstimate,
    snap: &NormalizedSnapshot,
    stack: &HistoryStack,
) -> Vec<f64> {
    let mut g = stack.gram().clone();
    g.add_outer(1.0, &snap.h_bar, &snap.h_bar);
    est.error_from(truth).matmul(&g).vec_columns()
}
