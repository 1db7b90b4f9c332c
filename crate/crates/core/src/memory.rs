//! Experience-replay history stack.
//!
//! Each stored sample keeps the normalized regressor `h̄_j` and the target
//! `y_j = ξ̄(t_j) − a l̄(t_j) − e^{−a t_j} ξ̄(0)`, so the stored residual is
//! `Σ̂ᵀ h̄_j − y_j` and no ground truth is needed at replay time. The Gram
//! matrix `G = Σ_j h̄_j h̄_jᵀ` and the cross term `C = Σ_j y_j h̄_jᵀ` are kept
//! incrementally; `λ_min(G)` certifies the rank condition.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filters::NormalizedSnapshot;
use crate::linalg::{min_eigenvalue, Matrix};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemorySample {
    pub h_bar: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
}

impl MemorySample {
    pub fn from_snapshot(snap: &NormalizedSnapshot) -> Self {
        Self { h_bar: snap.h_bar.clone(), y: snap.target(), t: snap.t }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Replacement {
    /// A full stack rejects new samples.
    #[default]
    Disabled,
    /// A full stack swaps out the sample whose replacement by the candidate
    /// gives the largest `λ_min(G)`, if that beats the current certificate.
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryStack {
    samples: Vec<MemorySample>,
    capacity: usize,
    regressor_dim: usize,
    target_dim: usize,
    gram: Matrix,
    cross: Matrix,
    m_theta: f64,
    rank_tol: f64,
    replacement: Replacement,
}

impl HistoryStack {
    pub fn new(n_xi: usize, m: usize, capacity: usize, rank_tol: f64) -> Self {
        let d = n_xi + m;
        Self {
            samples: Vec::with_capacity(capacity),
            capacity,
            regressor_dim: d,
            target_dim: n_xi,
            gram: Matrix::zeros(d, d),
            cross: Matrix::zeros(n_xi, d),
            m_theta: 0.0,
            rank_tol,
            replacement: Replacement::Disabled,
        }
    }

    pub fn with_replacement(mut self, replacement: Replacement) -> Self {
        self.replacement = replacement;
        self
    }

    pub fn samples(&self) -> &[MemorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() >= self.capacity
    }

    pub fn regressor_dim(&self) -> usize {
        self.regressor_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    /// `G = Σ_j h̄_j h̄_jᵀ`
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// `C = Σ_j y_j h̄_jᵀ`
    pub fn cross(&self) -> &Matrix {
        &self.cross
    }

    pub fn m_theta(&self) -> f64 {
        self.m_theta
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn rank_condition(&self) -> (bool, f64) {
        (self.m_theta > self.rank_tol, self.m_theta)
    }

    pub fn record(&mut self, snap: &NormalizedSnapshot) -> Result<()> {
        self.push(MemorySample::from_snapshot(snap))
    }

    pub fn push(&mut self, sample: MemorySample) -> Result<()> {
        if sample.h_bar.len() != self.regressor_dim {
            return Err(Error::Dimension { expected: self.regressor_dim, found: sample.h_bar.len() });
        }
        if sample.y.len() != self.target_dim {
            return Err(Error::Dimension { expected: self.target_dim, found: sample.y.len() });
        }
        if !self.is_full() {
            self.gram.add_outer(1.0, &sample.h_bar, &sample.h_bar);
            self.cross.add_outer(1.0, &sample.y, &sample.h_bar);
            self.samples.push(sample);
            self.m_theta = min_eigenvalue(&self.gram);
            return Ok(());
        }
        match self.replacement {
            Replacement::Disabled => Err(Error::StackFull { capacity: self.capacity }),
            Replacement::Greedy => {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..self.samples.len() {
                    let mut g = self.gram.clone();
                    g.add_outer(-1.0, &self.samples[j].h_bar, &self.samples[j].h_bar);
                    g.add_outer(1.0, &sample.h_bar, &sample.h_bar);
                    let lm = min_eigenvalue(&g);
                    if best.is_none_or(|(_, b)| lm > b) {
                        best = Some((j, lm));
                    }
                }
                if let Some((j, lm)) = best {
                    if lm > self.m_theta {
                        self.samples[j] = sample;
                        self.rebuild();
                    }
                }
                Ok(())
            }
        }
    }

    /// Recomputes `G`, `C` and the certificate from the stored samples.
    pub fn rebuild(&mut self) {
        let (gram, cross) = self.brute_force_sums();
        self.gram = gram;
        self.cross = cross;
        self.m_theta = if self.samples.is_empty() { 0.0 } else { min_eigenvalue(&self.gram) };
    }

    pub fn brute_force_sums(&self) -> (Matrix, Matrix) {
        let mut gram = Matrix::zeros(self.regressor_dim, self.regressor_dim);
        let mut cross = Matrix::zeros(self.target_dim, self.regressor_dim);
        for s in &self.samples {
            gram.add_outer(1.0, &s.h_bar, &s.h_bar);
            cross.add_outer(1.0, &s.y, &s.h_bar);
        }
        (gram, cross)
    }
}

/// Uniform recording times `t_j = t_start + j (t_end − t_start) / p`,
/// `j = 1..p`, realized on an integration grid of step `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordSchedule {
    steps: Vec<u64>,
    next: usize,
}

impl RecordSchedule {
    pub fn uniform(t_start: f64, t_end: f64, p: usize, dt: f64) -> Self {
        let span = t_end - t_start;
        let mut steps: Vec<u64> =
            (1..=p).map(|j| libm::round((t_start + span * j as f64 / p as f64) / dt) as u64).collect();
        steps.dedup();
        Self { steps, next: 0 }
    }

    /// `true` exactly once for each scheduled step index.
    pub fn due(&mut self, step: u64) -> bool {
        if self.steps.get(self.next) == Some(&step) {
            self.next += 1;
            true
        } else {
            false
        }
    }

    pub fn finished(&self) -> bool {
        self.next >= self.steps.len()
    }

    pub fn last_step(&self) -> Option<u64> {
        self.steps.last().copied()
    }
}
