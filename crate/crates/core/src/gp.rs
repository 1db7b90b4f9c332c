//! Gaussian-process regression over library masks.
//!
//! Squared-exponential kernel `σ₀² exp(−‖a − b‖² / (2λ²))`, Cholesky-based
//! posterior. The posterior variance includes the observation noise `σ_e²`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpHyper {
    pub sigma0_sq: f64,
    pub length_scale: f64,
    pub noise_sq: f64,
    /// Added to the diagonal before factorizing.
    pub jitter: f64,
}

impl GpHyper {
    /// `σ₀² = 1`, `λ = √N / 2`, `σ_e² = 1e−4`.
    pub fn for_dim(n: usize) -> Self {
        Self { sigma0_sq: 1.0, length_scale: libm::sqrt(n as f64) / 2.0, noise_sq: 1e-4, jitter: 1e-10 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0_sq > 0.0) || !(self.length_scale > 0.0) {
            return Err(Error::InvalidParameter("GP signal variance and length scale must be positive".into()));
        }
        if !(self.noise_sq >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::InvalidParameter("GP noise and jitter must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn kernel(a: &[f64], b: &[f64], hyper: &GpHyper) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    hyper.sigma0_sq * libm::exp(-d2 / (2.0 * hyper.length_scale * hyper.length_scale))
}

#[derive(Clone, Debug)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    hyper: GpHyper,
    chol: Cholesky,
    /// `(K + σ_e² I)⁻¹ y`
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, hyper: GpHyper) -> Result<Self> {
        hyper.validate()?;
        if x.is_empty() {
            return Err(Error::InvalidParameter("GP needs at least one training point".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Dimension { expected: x.len(), found: y.len() });
        }
        let dim = x[0].len();
        if let Some(bad) = x.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension { expected: dim, found: bad.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("GP targets must be finite".into()));
        }
        let n = x.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel(&x[i], &x[j], &hyper);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += hyper.noise_sq + hyper.jitter;
        }
        let chol = Cholesky::factor(&k)?;
        let alpha = chol.solve(&y);
        Ok(Self { x, y, hyper, chol, alpha })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    /// Posterior `(mean, variance)` at `q`.
    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let k: Vec<f64> = self.x.iter().map(|xi| kernel(xi, q, &self.hyper)).collect();
        let mean = dot(&k, &self.alpha);
        let v = self.chol.forward(&k);
        let var = (self.hyper.sigma0_sq - dot(&v, &v)).max(0.0) + self.hyper.noise_sq;
        (mean, var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noiseless() -> GpHyper {
        GpHyper { sigma0_sq: 1.0, length_scale: 1.0, noise_sq: 0.0, jitter: 0.0 }
    }

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    fn oracle(x: &[Vec<f64>], y: &[f64], h: &GpHyper, q: &[f64]) -> (f64, f64) {
        let n = x.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                k[i][j] = kernel(&x[i], &x[j], h) + if i == j { h.noise_sq + h.jitter } else { 0.0 };
            }
        }
        let kq: Vec<f64> = x.iter().map(|xi| kernel(xi, q, h)).collect();
        let a = dense_solve(k.clone(), y.to_vec());
        let b = dense_solve(k, kq.clone());
        (dot(&kq, &a), h.sigma0_sq - dot(&kq, &b) + h.noise_sq)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn kernel_examples() {
        let h = noiseless();
        assert_eq!(kernel(&[0.3, 0.2], &[0.3, 0.2], &h), 1.0);
        let k = kernel(&[0.0, 0.0], &[1.0, 1.0], &h);
        assert!((k - 0.367_879_441_171_442_3).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = random_points(&mut rng, 2, 4);
            assert_eq!(kernel(&p[0], &p[1], &h), kernel(&p[1], &p[0], &h));
        }
    }

    #[test]
    fn default_hyper() {
        let h = GpHyper::for_dim(9);
        assert_eq!((h.sigma0_sq, h.length_scale, h.noise_sq, h.jitter), (1.0, 1.5, 1e-4, 1e-10));
        assert!(GpHyper { length_scale: 0.0, ..h }.validate().is_err());
        assert!(GpHyper { noise_sq: -1.0, ..h }.validate().is_err());
    }

    #[test]
    fn noiseless_interpolation() {
        let gp = GpModel::fit(vec![vec![0.0, 1.0, 1.0]], vec![3.0], noiseless()).unwrap();
        let (m, v) = gp.posterior(&[0.0, 1.0, 1.0]);
        assert_eq!((m, v), (3.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_points(&mut rng, 6, 3);
        let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gp = GpModel::fit(x.clone(), y.clone(), noiseless()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, v) = gp.posterior(xi);
            assert!((m - yi).abs() < 1e-8, "{m} vs {yi}");
            assert!(v < 1e-8);
        }
    }

    #[test]
    fn far_queries_recover_the_prior() {
        let h = GpHyper { noise_sq: 1e-4, ..noiseless() };
        let gp = GpModel::fit(vec![vec![0.0, 0.0]], vec![5.0], h).unwrap();
        let (m, v) = gp.posterior(&[100.0, 100.0]);
        assert_eq!(m, 0.0);
        assert!((v - (1.0 + 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn two_point_model_matches_direct_solve() {
        let h = GpHyper { sigma0_sq: 1.3, length_scale: 0.7, noise_sq: 1e-3, jitter: 0.0 };
        let x = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let y = vec![0.5, -0.25];
        let gp = GpModel::fit(x.clone(), y.clone(), h).unwrap();
        // explicit 2×2 inverse
        let k11 = h.sigma0_sq + h.noise_sq;
        let k12 = kernel(&x[0], &x[1], &h);
        let det = k11 * k11 - k12 * k12;
        let q = [0.3, 0.6];
        let kq = [kernel(&x[0], &q, &h), kernel(&x[1], &q, &h)];
        let inv_y = [(k11 * y[0] - k12 * y[1]) / det, (-k12 * y[0] + k11 * y[1]) / det];
        let inv_k = [(k11 * kq[0] - k12 * kq[1]) / det, (-k12 * kq[0] + k11 * kq[1]) / det];
        let mean = kq[0] * inv_y[0] + kq[1] * inv_y[1];
        let var = h.sigma0_sq - (kq[0] * inv_k[0] + kq[1] * inv_k[1]) + h.noise_sq;
        let (m, v) = gp.posterior(&q);
        assert!((m - mean).abs() < 1e-10);
        assert!((v - var).abs() < 1e-10);
    }

    #[test]
    fn posterior_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=20 {
            let dim = rng.gen_range(1..10);
            let h = GpHyper {
                sigma0_sq: rng.gen_range(0.5..2.0),
                length_scale: rng.gen_range(0.3..2.0),
                noise_sq: 1e-4,
                jitter: 1e-10,
            };
            let x = random_points(&mut rng, n, dim);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let gp = GpModel::fit(x.clone(), y.clone(), h).unwrap();
            for _ in 0..10 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
                let (m, v) = gp.posterior(&q);
                let (mo, vo) = oracle(&x, &y, &h, &q);
                assert!((m - mo).abs() <= 1e-8 * mo.abs().max(1.0), "n={n}: {m} vs {mo}");
                assert!((v - vo).abs() <= 1e-8 * vo.abs().max(1.0), "n={n}: {v} vs {vo}");
            }
        }
    }

    #[test]
    fn variance_bounds_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = GpHyper::for_dim(5);
        let x = random_points(&mut rng, 5, 5);
        let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gp = GpModel::fit(x, y, h).unwrap();
        for _ in 0..1000 {
            let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..1.5)).collect();
            let (_, v) = gp.posterior(&q);
            assert!(v >= h.noise_sq - 1e-12);
            assert!(v <= h.sigma0_sq + h.noise_sq + 1e-12);
        }
    }

    #[test]
    fn adding_points_never_raises_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let dim = 4;
            let h = GpHyper::for_dim(dim);
            let x = random_points(&mut rng, 8, dim);
            let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let queries = random_points(&mut rng, 30, dim);
            let mut prev: Option<Vec<f64>> = None;
            for n in 1..=8 {
                let gp = GpModel::fit(x[..n].to_vec(), y[..n].to_vec(), h).unwrap();
                let vars: Vec<f64> = queries.iter().map(|q| gp.posterior(q).1).collect();
                if let Some(p) = &prev {
                    for (a, b) in vars.iter().zip(p) {
                        assert!(*a <= b + 1e-10);
                    }
                }
                prev = Some(vars);
            }
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(GpModel::fit(vec![], vec![], noiseless()).is_err());
        assert!(GpModel::fit(vec![vec![0.0]], vec![1.0, 2.0], noiseless()).is_err());
        assert!(GpModel::fit(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 2.0], noiseless()).is_err());
        // duplicate points without noise or jitter are singular
        assert!(matches!(
            GpModel::fit(vec![vec![1.0], vec![1.0]], vec![1.0, 2.0], noiseless()),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let jittered = GpHyper { jitter: 1e-10, ..noiseless() };
        assert!(GpModel::fit(vec![vec![1.0], vec![1.0]], vec![1.0, 2.0], jittered).is_ok());
    }
}
