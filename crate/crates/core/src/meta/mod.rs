//! Bayesian search over observable libraries.
//!
//! Every candidate mask is scored by running the identifier with that
//! library and measuring the mean stored-sample residual `ℓ`, plus a
//! sparsity penalty: `J = ℓ + λ n_xi`. A GP over masks and expected
//! improvement pick the next candidate; continuous proposals are rounded.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::{GpHyper, GpModel};
use crate::identifier::{integrate_identifier, KoopmanEstimate, RunConfig, RunSummary};
use crate::linalg::norm;
use crate::memory::HistoryStack;
use crate::observables::{LibraryMask, ObservableCatalog};
use crate::plant::InputMap;

/// Enumeration is used for proposals up to this many catalog entries.
pub const ENUMERATION_LIMIT: usize = 12;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetaRecord {
    pub mask: LibraryMask,
    /// `ℓ + λ n_xi`, infinite when the identifier failed.
    pub j_r: f64,
    pub ell: f64,
    pub n_xi: usize,
    pub summary: Option<RunSummary>,
    pub failure: Option<alloc::string::String>,
}

impl MetaRecord {
    pub fn failed(mask: LibraryMask, why: &Error) -> Self {
        let n_xi = mask.popcount();
        Self { mask, j_r: f64::INFINITY, ell: f64::INFINITY, n_xi, summary: None, failure: Some(why.to_string()) }
    }
}

/// Mean over stored samples of `‖Σ̂ᵀ h̄_j − y_j‖`.
pub fn stored_loss(est: &KoopmanEstimate, stack: &HistoryStack) -> f64 {
    let samples = stack.samples();
    if samples.is_empty() {
        return f64::INFINITY;
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let mut r = est.apply(&s.h_bar);
            for (ri, yi) in r.iter_mut().zip(&s.y) {
                *ri -= yi;
            }
            norm(&r)
        })
        .sum();
    total / samples.len() as f64
}

/// Runs the identifier with the library selected by `mask` and scores it.
pub fn meta_cost(
    mask: &LibraryMask,
    lambda_sparsity: f64,
    run: &RunConfig,
    catalog: &ObservableCatalog,
    input_map: &dyn InputMap,
) -> MetaRecord {
    if mask.len() != catalog.len() {
        return MetaRecord::failed(mask.clone(), &Error::Dimension { expected: catalog.len(), found: mask.len() });
    }
    let outcome =
        mask.decode().and_then(|lib| integrate_identifier(run, catalog, &lib, input_map, None).map(|o| (lib, o)));
    match outcome {
        Ok((lib, o)) => {
            let ell = stored_loss(&o.estimate, &o.stack);
            let n_xi = lib.n_xi();
            let j_r = if ell.is_finite() { ell + lambda_sparsity * n_xi as f64 } else { f64::INFINITY };
            MetaRecord { mask: mask.clone(), j_r, ell, n_xi, summary: Some(o.summary), failure: None }
        }
        Err(e) => MetaRecord::failed(mask.clone(), &e),
    }
}

/// Scores masks. Implementors may cache or evaluate batches in parallel.
pub trait MaskEvaluator {
    fn evaluate(&self, mask: &LibraryMask) -> MetaRecord;

    fn evaluate_many(&self, masks: &[LibraryMask]) -> Vec<MetaRecord> {
        masks.iter().map(|m| self.evaluate(m)).collect()
    }
}

/// Evaluates masks with [`meta_cost`].
pub struct IdentifierEvaluator<'a> {
    pub run: RunConfig,
    pub catalog: &'a ObservableCatalog,
    pub input_map: &'a dyn InputMap,
    pub lambda_sparsity: f64,
}

impl<'a> IdentifierEvaluator<'a> {
    /// Trajectory logging is switched off; only the summary is kept.
    pub fn new(
        run: &RunConfig,
        catalog: &'a ObservableCatalog,
        input_map: &'a dyn InputMap,
        lambda_sparsity: f64,
    ) -> Self {
        Self { run: RunConfig { log_stride: 0, ..run.clone() }, catalog, input_map, lambda_sparsity }
    }
}

impl MaskEvaluator for IdentifierEvaluator<'_> {
    fn evaluate(&self, mask: &LibraryMask) -> MetaRecord {
        meta_cost(mask, self.lambda_sparsity, &self.run, self.catalog, self.input_map)
    }
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

pub fn standard_normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI)
}

/// Expected improvement of a minimization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if !(sd > 0.0) {
        return 0.0;
    }
    let z = (best - mean) / sd;
    ((best - mean) * standard_normal_cdf(z) + sd * standard_normal_pdf(z)).max(0.0)
}

/// Candidate masks: every nonempty mask, optionally restricted to a whitelist.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSpace {
    n: usize,
    whitelist: Option<Vec<LibraryMask>>,
}

impl DesignSpace {
    pub fn full(n: usize) -> Result<Self> {
        if n == 0 || n >= 64 {
            return Err(Error::InvalidParameter("catalog size must be in 1..=63".into()));
        }
        Ok(Self { n, whitelist: None })
    }

    pub fn restricted(n: usize, mut masks: Vec<LibraryMask>) -> Result<Self> {
        Self::full(n)?;
        if masks.is_empty() {
            return Err(Error::InvalidParameter("mask whitelist is empty".into()));
        }
        for m in &masks {
            if m.len() != n {
                return Err(Error::Dimension { expected: n, found: m.len() });
            }
            if m.popcount() == 0 {
                return Err(Error::EmptyLibrary);
            }
        }
        masks.sort_by_key(LibraryMask::value);
        masks.dedup();
        Ok(Self { n, whitelist: Some(masks) })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_restricted(&self) -> bool {
        self.whitelist.is_some()
    }

    pub fn contains(&self, mask: &LibraryMask) -> bool {
        match &self.whitelist {
            Some(w) => w.contains(mask),
            None => mask.len() == self.n && mask.popcount() > 0,
        }
    }

    /// Number of candidates, saturating.
    pub fn size(&self) -> u64 {
        match &self.whitelist {
            Some(w) => w.len() as u64,
            None => (1u64 << self.n) - 1,
        }
    }

    /// All candidates in increasing mask value.
    pub fn candidates(&self) -> Vec<LibraryMask> {
        match &self.whitelist {
            Some(w) => w.clone(),
            None => LibraryMask::all_nonempty(self.n).collect(),
        }
    }

    fn enumerable(&self) -> bool {
        self.whitelist.is_some() || self.n <= ENUMERATION_LIMIT
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> LibraryMask {
        match &self.whitelist {
            Some(w) => w[rng.gen_range(0..w.len())].clone(),
            None => LibraryMask::from_value(rng.gen_range(1..(1u64 << self.n)), self.n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetaConfig {
    pub lambda_sparsity: f64,
    /// Total number of evaluations, seeds included.
    pub t_outer: usize,
    pub n_init: usize,
    /// Stop after this many proposals without improving the best cost.
    pub patience: usize,
    /// `None` selects [`GpHyper::for_dim`].
    pub gp: Option<GpHyper>,
    pub seed: u64,
    /// Random starts of the continuous ascent used above the enumeration limit.
    pub restarts: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self { lambda_sparsity: 0.1, t_outer: 30, n_init: 5, patience: 10, gp: None, seed: 0, restarts: 16 }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_sparsity >= 0.0) || !self.lambda_sparsity.is_finite() {
            return Err(Error::InvalidParameter("lambda_sparsity must be finite and >= 0".into()));
        }
        if self.t_outer == 0 {
            return Err(Error::InvalidParameter("t_outer must be >= 1".into()));
        }
        if self.n_init == 0 {
            return Err(Error::InvalidParameter("n_init must be >= 1".into()));
        }
        if let Some(h) = &self.gp {
            h.validate()?;
        }
        Ok(())
    }
}

/// Index of the minimal cost; ties go to the lowest mask value.
pub fn argmin(records: &[MetaRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let rb = &records[b];
                let better = r.j_r < rb.j_r || (r.j_r == rb.j_r && r.mask.value() < rb.mask.value());
                Some(if better { i } else { b })
            }
        };
    }
    best
}

#[derive(Clone, Debug)]
pub struct BoState {
    pub records: Vec<MetaRecord>,
    pub best: usize,
    pub gp: GpModel,
}

impl BoState {
    /// Fits the GP on all records. Infinite costs are replaced by one more
    /// than the worst finite cost so the GP stays well defined.
    pub fn fit(records: Vec<MetaRecord>, hyper: GpHyper) -> Result<Self> {
        let best = argmin(&records).ok_or(Error::InvalidParameter("no records to fit".into()))?;
        let worst = records.iter().map(|r| r.j_r).filter(|j| j.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let cap = if worst.is_finite() { worst + 1.0 } else { 1.0 };
        let x = records.iter().map(|r| r.mask.as_point()).collect();
        let y = records.iter().map(|r| if r.j_r.is_finite() { r.j_r } else { cap }).collect();
        let gp = GpModel::fit(x, y, hyper)?;
        Ok(Self { records, best, gp })
    }

    pub fn best_cost(&self) -> f64 {
        self.records[self.best].j_r
    }

    /// Best value used by the acquisition (finite stand-in when all failed).
    fn incumbent(&self) -> f64 {
        let b = self.best_cost();
        if b.is_finite() {
            b
        } else {
            self.gp.targets().iter().copied().fold(f64::INFINITY, f64::min)
        }
    }

    pub fn acquisition(&self, point: &[f64]) -> f64 {
        let (mean, var) = self.gp.posterior(point);
        expected_improvement(mean, libm::sqrt(var), self.incumbent())
    }
}

/// Maximizes expected improvement over the design space.
pub fn propose_next(state: &BoState, space: &DesignSpace, restarts: usize, rng: &mut ChaCha8Rng) -> LibraryMask {
    if space.enumerable() {
        return best_by_ei(state, space.candidates().into_iter());
    }
    let n = space.dim();
    let mut best: Option<(LibraryMask, f64)> = None;
    for _ in 0..restarts.max(1) {
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let point = ascend(state, start);
        let mut mask = LibraryMask::round(&point);
        if mask.popcount() == 0 {
            mask = best_by_ei(state, (0..n).map(|k| unit_mask(n, k)));
        }
        let ei = state.acquisition(&mask.as_point());
        if best.as_ref().is_none_or(|(m, b)| ei > *b || (ei == *b && mask.value() < m.value())) {
            best = Some((mask, ei));
        }
    }
    best.map(|(m, _)| m).unwrap_or_else(|| unit_mask(n, 0))
}

fn unit_mask(n: usize, k: usize) -> LibraryMask {
    let mut bits = vec![false; n];
    bits[k] = true;
    LibraryMask::from_bits(bits)
}

fn best_by_ei(state: &BoState, masks: impl Iterator<Item = LibraryMask>) -> LibraryMask {
    let mut best: Option<(LibraryMask, f64)> = None;
    for m in masks {
        let ei = state.acquisition(&m.as_point());
        if best.as_ref().is_none_or(|(bm, b)| ei > *b || (ei == *b && m.value() < bm.value())) {
            best = Some((m, ei));
        }
    }
    best.expect("design space is nonempty").0
}

/// Projected finite-difference gradient ascent on `[0,1]^N`.
fn ascend(state: &BoState, mut x: Vec<f64>) -> Vec<f64> {
    let h = 1e-4;
    let mut step = 0.25;
    let mut fx = state.acquisition(&x);
    for _ in 0..100 {
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] = (xp[i] + h).min(1.0);
            xm[i] = (xm[i] - h).max(0.0);
            grad[i] = (state.acquisition(&xp) - state.acquisition(&xm)) / (xp[i] - xm[i]);
        }
        let gn = norm(&grad);
        if gn < 1e-12 {
            break;
        }
        let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| (xi + step * gi / gn).clamp(0.0, 1.0)).collect();
        let ft = state.acquisition(&trial);
        if ft > fx {
            x = trial;
            fx = ft;
        } else {
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
    }
    x
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoResult {
    /// Evaluation order, seeds first.
    pub history: Vec<MetaRecord>,
    /// Running best cost after each evaluation.
    pub best_so_far: Vec<f64>,
    pub best: usize,
    /// `true` when the loop stopped on stagnation rather than the budget.
    pub stagnated: bool,
}

impl BoResult {
    pub fn best_record(&self) -> &MetaRecord {
        &self.history[self.best]
    }
}

pub fn run_bo(cfg: &MetaConfig, space: &DesignSpace, evaluator: &dyn MaskEvaluator) -> Result<BoResult> {
    cfg.validate()?;
    let hyper = cfg.gp.unwrap_or_else(|| GpHyper::for_dim(space.dim()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_init = cfg.n_init.min(cfg.t_outer);
    let seeds = initial_masks(space, n_init, &mut rng);
    let mut history = evaluator.evaluate_many(&seeds);
    let mut best_so_far = Vec::with_capacity(cfg.t_outer);
    let mut running = f64::INFINITY;
    for r in &history {
        running = running.min(r.j_r);
        best_so_far.push(running);
    }

    let mut stale = 0;
    let mut stagnated = false;
    while history.len() < cfg.t_outer {
        if stale >= cfg.patience {
            stagnated = true;
            break;
        }
        let state = BoState::fit(history.clone(), hyper)?;
        let next = propose_next(&state, space, cfg.restarts, &mut rng);
        let rec = evaluator.evaluate(&next);
        if rec.j_r < running {
            running = rec.j_r;
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(rec);
        best_so_far.push(running);
    }
    let best = argmin(&history).expect("at least one evaluation");
    Ok(BoResult { history, best_so_far, best, stagnated })
}

/// Distinct random masks while the space allows, then repeats.
fn initial_masks(space: &DesignSpace, k: usize, rng: &mut ChaCha8Rng) -> Vec<LibraryMask> {
    if space.enumerable() && (space.size() as usize) <= k.saturating_mul(4) {
        let mut all = space.candidates();
        all.shuffle(rng);
        let mut out: Vec<LibraryMask> = all.iter().take(k).cloned().collect();
        while out.len() < k {
            out.push(space.sample(rng));
        }
        return out;
    }
    let mut out: Vec<LibraryMask> = Vec::with_capacity(k);
    while out.len() < k {
        let m = space.sample(rng);
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleResult {
    /// One record per candidate, in increasing mask value.
    pub table: Vec<MetaRecord>,
    pub best: usize,
}

impl OracleResult {
    pub fn best_record(&self) -> &MetaRecord {
        &self.table[self.best]
    }

    /// Table indices sorted by cost, ties by mask value.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.table.len()).collect();
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&self.table[a], &self.table[b]);
            ra.j_r.total_cmp(&rb.j_r).then(ra.mask.value().cmp(&rb.mask.value()))
        });
        idx
    }

    /// 1-based position of `mask` in [`OracleResult::ranking`].
    pub fn rank_of(&self, mask: &LibraryMask) -> Option<usize> {
        self.ranking().iter().position(|&i| &self.table[i].mask == mask).map(|p| p + 1)
    }
}

pub fn exhaustive_oracle(space: &DesignSpace, evaluator: &dyn MaskEvaluator) -> OracleResult {
    let table = evaluator.evaluate_many(&space.candidates());
    let best = argmin(&table).expect("design space is nonempty");
    OracleResult { table, best }
}
