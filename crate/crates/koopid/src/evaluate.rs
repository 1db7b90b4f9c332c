//! Mask evaluators backed by a thread pool and a result cache.

use std::collections::HashMap;
use std::sync::Mutex;

use koopid_core::meta::IdentifierEvaluator;
use koopid_core::{LibraryMask, MaskEvaluator, MetaRecord};
use rayon::prelude::*;

/// Runs batches on a dedicated pool of `jobs` workers.
pub struct ParallelEvaluator<'a> {
    inner: IdentifierEvaluator<'a>,
    pool: rayon::ThreadPool,
}

impl<'a> ParallelEvaluator<'a> {
    pub fn new(inner: IdentifierEvaluator<'a>, jobs: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
        Ok(Self { inner, pool })
    }
}

impl MaskEvaluator for ParallelEvaluator<'_> {
    fn evaluate(&self, mask: &LibraryMask) -> MetaRecord {
        self.inner.evaluate(mask)
    }

    fn evaluate_many(&self, masks: &[LibraryMask]) -> Vec<MetaRecord> {
        self.pool.install(|| masks.par_iter().map(|m| self.inner.evaluate(m)).collect())
    }
}

/// Remembers every record. Evaluation is deterministic, so repeated
/// proposals and repeated searches reuse earlier runs.
pub struct CachedEvaluator<E> {
    inner: E,
    cache: Mutex<HashMap<LibraryMask, MetaRecord>>,
}

impl<E: MaskEvaluator> CachedEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn seed(&self, records: impl IntoIterator<Item = MetaRecord>) {
        let mut c = self.cache.lock().expect("cache lock");
        for r in records {
            c.insert(r.mask.clone(), r);
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl<E: MaskEvaluator> MaskEvaluator for CachedEvaluator<E> {
    fn evaluate(&self, mask: &LibraryMask) -> MetaRecord {
        if let Some(r) = self.cache.lock().expect("cache lock").get(mask) {
            return r.clone();
        }
        let r = self.inner.evaluate(mask);
        self.cache.lock().expect("cache lock").insert(mask.clone(), r.clone());
        r
    }

    fn evaluate_many(&self, masks: &[LibraryMask]) -> Vec<MetaRecord> {
        let missing: Vec<LibraryMask> = {
            let c = self.cache.lock().expect("cache lock");
            let mut seen = Vec::new();
            for m in masks {
                if !c.contains_key(m) && !seen.contains(m) {
                    seen.push(m.clone());
                }
            }
            seen
        };
        let fresh = self.inner.evaluate_many(&missing);
        let mut c = self.cache.lock().expect("cache lock");
        for r in fresh {
            c.insert(r.mask.clone(), r);
        }
        masks.iter().map(|m| c[m].clone()).collect()
    }
}
