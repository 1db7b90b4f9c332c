//! Filtered regressors.
//!
//! With `Z = (ξᵀ, Ψ(u)ᵀ)ᵀ` the first-order filters
//!
//! ```text
//! ḣ = −a h + Z,   h(0) = 0
//! l̇ = −a l + ξ,   l(0) = 0
//! ```
//!
//! turn `ξ̇ = Σ*ᵀ Z` into the algebraic identity
//! `ξ(t) = Σ*ᵀ h + a l + e^{−a t} ξ(0)`, so the Koopman pair can be fitted
//! without differentiating measurements. Dividing by
//! `n_s = 1 + hᵀh + lᵀl` keeps every regressor inside the unit ball.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::identifier::KoopmanEstimate;
use crate::linalg::dot;
use crate::ode::Rk4;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    /// Filtered `Z`, length `n_xi + m`.
    pub h: Vec<f64>,
    /// Filtered `ξ`, length `n_xi`.
    pub l: Vec<f64>,
    pub t: f64,
    /// Lifted initial state `ξ(0)`.
    pub xi0: Vec<f64>,
    /// Filter gain, `𝒜 = a I`.
    pub a: f64,
}

impl FilterState {
    pub fn new(xi0: Vec<f64>, m: usize, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("filter gain must be positive, got {a}")));
        }
        let n = xi0.len();
        Ok(Self { h: vec![0.0; n + m], l: vec![0.0; n], t: 0.0, xi0, a })
    }

    pub fn n_xi(&self) -> usize {
        self.l.len()
    }

    pub fn m(&self) -> usize {
        self.h.len() - self.l.len()
    }

    /// Writes `(ḣ, l̇)` for the given `ξ`, `Ψ(u)` into `dh` and `dl`.
    pub fn derivative(a: f64, h: &[f64], l: &[f64], xi: &[f64], psi_u: &[f64], dh: &mut [f64], dl: &mut [f64]) {
        let n = xi.len();
        for i in 0..n {
            dh[i] = -a * h[i] + xi[i];
            dl[i] = -a * l[i] + xi[i];
        }
        for (j, p) in psi_u.iter().enumerate() {
            dh[n + j] = -a * h[n + j] + p;
        }
    }

    /// One RK4 step with `ξ` and `Ψ(u)` held constant over the step.
    pub fn step(&mut self, xi: &[f64], psi_u: &[f64], dt: f64) -> Result<()> {
        let n = self.n_xi();
        let m = self.m();
        if xi.len() != n {
            return Err(Error::Dimension { expected: n, found: xi.len() });
        }
        if psi_u.len() != m {
            return Err(Error::Dimension { expected: m, found: psi_u.len() });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("dt must be positive, got {dt}")));
        }
        let mut y: Vec<f64> = self.h.iter().chain(&self.l).copied().collect();
        let a = self.a;
        Rk4::new(y.len()).step(
            |_, s, ds| {
                let (h, l) = s.split_at(n + m);
                let (dh, dl) = ds.split_at_mut(n + m);
                Self::derivative(a, h, l, xi, psi_u, dh, dl);
            },
            self.t,
            &mut y,
            dt,
        );
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t: self.t + dt, what: "filter state" });
        }
        self.h.copy_from_slice(&y[..n + m]);
        self.l.copy_from_slice(&y[n + m..]);
        self.t += dt;
        Ok(())
    }

    /// Normalized quantities at the current time for the measured lifted
    /// state `xi`.
    pub fn normalize(&self, xi: &[f64]) -> NormalizedSnapshot {
        let n_s = 1.0 + dot(&self.h, &self.h) + dot(&self.l, &self.l);
        let inv = 1.0 / n_s;
        NormalizedSnapshot {
            h_bar: self.h.iter().map(|v| v * inv).collect(),
            l_bar: self.l.iter().map(|v| v * inv).collect(),
            xi_bar: xi.iter().map(|v| v * inv).collect(),
            xi0_bar: self.xi0.iter().map(|v| v * inv).collect(),
            n_s,
            decay: libm::exp(-self.a * self.t),
            a: self.a,
            t: self.t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizedSnapshot {
    pub h_bar: Vec<f64>,
    pub l_bar: Vec<f64>,
    pub xi_bar: Vec<f64>,
    /// `ξ(0) / n_s(t)`
    pub xi0_bar: Vec<f64>,
    pub n_s: f64,
    /// `e^{−a t}`, closed form.
    pub decay: f64,
    pub a: f64,
    pub t: f64,
}

impl NormalizedSnapshot {
    /// Regression target `ξ̄ − a l̄ − e^{−a t} ξ̄(0)`; equals `Σ*ᵀ h̄` for an
    /// exact library.
    pub fn target(&self) -> Vec<f64> {
        self.xi_bar
            .iter()
            .zip(&self.l_bar)
            .zip(&self.xi0_bar)
            .map(|((x, l), x0)| x - self.a * l - self.decay * x0)
            .collect()
    }
}

/// `ξ̂̄ = Σ̂ᵀ h̄ + a l̄ + e^{−a t} ξ̄(0)`
pub fn predict_lifted(est: &KoopmanEstimate, snap: &NormalizedSnapshot) -> Result<Vec<f64>> {
    if snap.h_bar.len() != est.n_xi() + est.m() {
        return Err(Error::Dimension { expected: est.n_xi() + est.m(), found: snap.h_bar.len() });
    }
    if snap.l_bar.len() != est.n_xi() {
        return Err(Error::Dimension { expected: est.n_xi(), found: snap.l_bar.len() });
    }
    let mut out = est.apply(&snap.h_bar);
    for ((o, l), x0) in out.iter_mut().zip(&snap.l_bar).zip(&snap.xi0_bar) {
        *o += snap.a * l + snap.decay * x0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm, Matrix};
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_state_is_equilibrium() {
        let mut f = FilterState::new(vec![0.0; 3], 1, 1.0).unwrap();
        f.step(&[0.0; 3], &[0.0], 1e-3).unwrap();
        assert!(f.h.iter().chain(&f.l).all(|v| *v == 0.0));
    }

    #[test]
    fn constant_input_response() {
        // h(t) = Z/a (1 − e^{−a t}) for constant Z
        let a = 2.0;
        let z = [0.5, -1.5, 3.0];
        let mut f = FilterState::new(vec![0.0; 2], 1, a).unwrap();
        let dt = 1e-3;
        for _ in 0..3000 {
            f.step(&z[..2], &z[2..], dt).unwrap();
        }
        let decay = libm::exp(-a * f.t);
        let gap: Vec<f64> = f.h.iter().zip(&z).map(|(h, z)| h - z / a).collect();
        let bound = decay * norm(&z) / a;
        assert!(norm(&gap) <= bound * (1.0 + 1e-9));
        assert!((norm(&gap) - bound).abs() < 1e-9);
    }

    #[test]
    fn normalization_examples() {
        let f = FilterState::new(vec![0.0; 2], 1, 1.0).unwrap();
        let s = f.normalize(&[0.0, 0.0]);
        assert_eq!(s.n_s, 1.0);
        assert!(s.h_bar.iter().all(|v| *v == 0.0));

        let mut f = FilterState::new(vec![0.0; 2], 1, 1.0).unwrap();
        f.h = vec![0.6, 0.8, 0.0];
        let s = f.normalize(&[0.0, 0.0]);
        assert_eq!(s.n_s, 2.0);
        assert!((norm(&s.h_bar) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalized_regressors_stay_in_unit_ball() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let mut f = FilterState::new(vec![0.0; 3], 2, 1.0).unwrap();
            let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
            f.h = (0..5).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            f.l = (0..3).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            let s = f.normalize(&[0.0; 3]);
            let lhs = dot(&s.h_bar, &s.h_bar) + dot(&s.l_bar, &s.l_bar);
            assert!(s.n_s >= 1.0);
            assert!(lhs <= 1.0 - 1.0 / s.n_s + 1e-15);
        }
    }

    #[test]
    fn prediction_is_affine_in_estimate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, m) = (3, 1);
        let snap = NormalizedSnapshot {
            h_bar: (0..n + m).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            l_bar: (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            xi_bar: (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            xi0_bar: (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            n_s: 2.0,
            decay: 0.4,
            a: 1.5,
            t: 0.6,
        };
        let zero = KoopmanEstimate::zeros(n, m);
        let p0 = predict_lifted(&zero, &snap).unwrap();
        for i in 0..n {
            let expect = snap.a * snap.l_bar[i] + snap.decay * snap.xi0_bar[i];
            assert!((p0[i] - expect).abs() < 1e-15);
        }

        // ξ̂̄ − ξ̄ = Σ̃ᵀ h̄ when ξ̄ is generated by a "true" Σ*
        let truth =
            Matrix::from_row_slice(n, n + m, &(0..n * (n + m)).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
        let est =
            Matrix::from_row_slice(n, n + m, &(0..n * (n + m)).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
        let mut snap = snap;
        let sh = truth.matvec(&snap.h_bar);
        for i in 0..n {
            snap.xi_bar[i] = sh[i] + snap.a * snap.l_bar[i] + snap.decay * snap.xi0_bar[i];
        }
        let exact = predict_lifted(&KoopmanEstimate::from_ab(truth.clone()), &snap).unwrap();
        for i in 0..n {
            assert!((exact[i] - snap.xi_bar[i]).abs() < 1e-15);
        }
        let pred = predict_lifted(&KoopmanEstimate::from_ab(est.clone()), &snap).unwrap();
        let mut tilde = est.clone();
        tilde.add_assign(&truth.scaled(-1.0));
        let oracle = tilde.matvec(&snap.h_bar);
        for i in 0..n {
            assert!((pred[i] - snap.xi_bar[i] - oracle[i]).abs() < 1e-14);
        }
        assert!(matches!(predict_lifted(&KoopmanEstimate::zeros(2, 1), &snap), Err(Error::Dimension { .. })));
    }
}
