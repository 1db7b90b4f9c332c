//! Experiment configuration.
//!
//! A TOML file with fixed sections. Every key is optional and falls back to
//! the benchmark default; unknown sections or keys are rejected.
//!
//! ```toml
//! [plant]
//! mu = -1.0
//! lambda = -1.0
//! x0 = [1.0, -1.0]
//! probe_on = 0.0
//! probe_off = 0.5
//!
//! [run]
//! dt = 1e-4
//! t_final = 5.0
//! filter_gain = 1.0
//! stop_tol = 1e-8
//! sigma_tol = 1e-3
//! g_rel_tol = 1e-3
//! log_stride = 10
//!
//! [flow]
//! alpha = 3.0
//! r = 0
//! delta = 1e-6
//! dt_flow = 1e-4
//! integrator = "rk4"        # or "exact_path"
//!
//! [stack]
//! capacity = 21
//! record_start = 0.0
//! record_end = 0.5
//! rank_tol = 1e-6
//! replacement = "disabled"  # or "greedy"
//!
//! [catalog]
//! exponents = [[1, 0], [0, 1], [1, 1], [2, 0], [0, 2], [2, 1], [1, 2], [2, 2], [4, 0]]
//!
//! [library]
//! indices = [1, 2, 4, 9]    # or: mask = "110100001"
//!
//! [meta]
//! lambda_sparsity = 0.1
//! t_outer = 30
//! n_init = 5
//! patience = 10
//! restarts = 16
//! seed = 0
//! whitelist = []            # optional list of mask strings
//!
//! [gp]
//! sigma0_sq = 1.0
//! length_scale = 1.5        # default sqrt(N)/2
//! noise_sq = 1e-4
//! jitter = 1e-10
//! ```

use std::fmt;
use std::path::Path;

use koopid_core::identifier::Integrator;
use koopid_core::meta::{DesignSpace, MetaConfig};
use koopid_core::observables::DEFAULT_EXPONENTS;
use koopid_core::{
    FlowConfig, GpHyper, LibraryMask, ObservableCatalog, ObservableLibrary, PlantParams, Replacement, RunConfig,
    StackPolicy,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid { key: String, line: Option<usize>, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub run: RunSection,
    pub flow: FlowSection,
    pub stack: StackSection,
    pub catalog: CatalogSection,
    pub library: LibrarySection,
    pub meta: MetaSection,
    pub gp: GpSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub mu: f64,
    pub lambda: f64,
    pub x0: [f64; 2],
    pub probe_on: f64,
    pub probe_off: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = PlantParams::default();
        Self { mu: p.mu, lambda: p.lambda, x0: RunConfig::default().x0, probe_on: p.probe_on, probe_off: p.probe_off }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dt: f64,
    pub t_final: f64,
    pub filter_gain: f64,
    pub stop_tol: f64,
    pub sigma_tol: f64,
    pub g_rel_tol: f64,
    pub log_stride: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            dt: r.dt,
            t_final: r.t_final,
            filter_gain: r.filter_gain,
            stop_tol: r.stop_tol,
            sigma_tol: r.sigma_tol,
            g_rel_tol: r.g_rel_tol,
            log_stride: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub alpha: f64,
    pub r: u32,
    pub delta: f64,
    pub dt_flow: f64,
    pub integrator: Integrator,
}

impl Default for FlowSection {
    fn default() -> Self {
        let f = FlowConfig::default();
        Self { alpha: f.alpha, r: f.r, delta: f.delta, dt_flow: f.dt_flow, integrator: f.integrator }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSection {
    pub capacity: usize,
    pub record_start: f64,
    pub record_end: f64,
    pub rank_tol: f64,
    pub replacement: ReplacementName,
}

impl Default for StackSection {
    fn default() -> Self {
        let s = StackPolicy::default();
        Self {
            capacity: s.capacity,
            record_start: s.record_start,
            record_end: s.record_end,
            rank_tol: s.rank_tol,
            replacement: ReplacementName::Disabled,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementName {
    Disabled,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    /// `(p, q)` per entry for the monomial `x1^p x2^q`.
    pub exponents: Vec<[u32; 2]>,
}

impl Default for CatalogSection {
    fn default() -> Self {
        Self { exponents: DEFAULT_EXPONENTS.iter().map(|&(p, q)| [p, q]).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaSection {
    pub lambda_sparsity: f64,
    pub t_outer: usize,
    pub n_init: usize,
    pub patience: usize,
    pub restarts: usize,
    pub seed: u64,
    pub whitelist: Vec<String>,
}

impl Default for MetaSection {
    fn default() -> Self {
        let m = MetaConfig::default();
        Self {
            lambda_sparsity: m.lambda_sparsity,
            t_outer: m.t_outer,
            n_init: m.n_init,
            patience: m.patience,
            restarts: m.restarts,
            seed: m.seed,
            whitelist: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    pub sigma0_sq: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    pub noise_sq: f64,
    pub jitter: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        let h = GpHyper::for_dim(1);
        Self { sigma0_sq: h.sigma0_sq, length_scale: None, noise_sq: h.noise_sq, jitter: h.jitter }
    }
}

/// A validated configuration, converted into library types.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub raw: ExperimentConfig,
    pub run: RunConfig,
    pub catalog: ObservableCatalog,
    pub library: ObservableLibrary,
    pub meta: MetaConfig,
    pub space: DesignSpace,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(describe(text, &e)))?;
        Self::resolve(raw, Some(text))
    }

    pub fn resolve(raw: ExperimentConfig, text: Option<&str>) -> Result<Self, ConfigError> {
        let invalid = |section: &str, key: &str, message: String| ConfigError::Invalid {
            key: format!("{section}.{key}"),
            line: text.and_then(|t| locate(t, section, key)),
            message,
        };

        let p = &raw.plant;
        let plant = PlantParams { mu: p.mu, lambda: p.lambda, probe_on: p.probe_on, probe_off: p.probe_off };
        plant.validate().map_err(|e| invalid("plant", "probe_off", e.to_string()))?;
        if !p.x0.iter().all(|v| v.is_finite()) {
            return Err(invalid("plant", "x0", "initial state must be finite".into()));
        }

        let f = &raw.flow;
        for (key, ok) in [("alpha", f.alpha > 0.0), ("delta", f.delta >= 0.0), ("dt_flow", f.dt_flow > 0.0)] {
            if !ok {
                return Err(invalid("flow", key, "out of range".into()));
            }
        }
        let r = &raw.run;
        for (key, ok) in [
            ("dt", r.dt > 0.0),
            ("t_final", r.t_final > 0.0),
            ("filter_gain", r.filter_gain > 0.0),
            ("stop_tol", r.stop_tol >= 0.0),
            ("sigma_tol", r.sigma_tol > 0.0),
            ("g_rel_tol", r.g_rel_tol > 0.0),
        ] {
            if !ok {
                return Err(invalid("run", key, "must be positive".into()));
            }
        }
        let s = &raw.stack;
        if s.capacity == 0 {
            return Err(invalid("stack", "capacity", "must be >= 1".into()));
        }
        if !(s.record_start < s.record_end) || s.record_start < 0.0 {
            return Err(invalid("stack", "record_end", "record window must satisfy 0 <= start < end".into()));
        }
        if !(s.rank_tol >= 0.0) {
            return Err(invalid("stack", "rank_tol", "must be >= 0".into()));
        }

        let run = RunConfig {
            plant,
            x0: p.x0,
            dt: r.dt,
            t_final: r.t_final,
            filter_gain: r.filter_gain,
            flow: FlowConfig { alpha: f.alpha, r: f.r, delta: f.delta, dt_flow: f.dt_flow, integrator: f.integrator },
            stack: StackPolicy {
                capacity: s.capacity,
                record_start: s.record_start,
                record_end: s.record_end,
                rank_tol: s.rank_tol,
                replacement: match s.replacement {
                    ReplacementName::Disabled => Replacement::Disabled,
                    ReplacementName::Greedy => Replacement::Greedy,
                },
            },
            stop_tol: r.stop_tol,
            sigma_tol: r.sigma_tol,
            g_rel_tol: r.g_rel_tol,
            log_stride: r.log_stride,
        };

        let pairs: Vec<(u32, u32)> = raw.catalog.exponents.iter().map(|e| (e[0], e[1])).collect();
        if pairs.is_empty() || pairs.len() >= 64 {
            return Err(invalid("catalog", "exponents", "catalog needs 1 to 63 entries".into()));
        }
        let catalog = ObservableCatalog::from_planar_exponents(&pairs)
            .map_err(|e| invalid("catalog", "exponents", e.to_string()))?;
        let n = catalog.len();

        let library = match (&raw.library.indices, &raw.library.mask) {
            (Some(_), Some(_)) => {
                return Err(invalid("library", "mask", "give either indices or mask, not both".into()));
            }
            (Some(idx), None) => {
                ObservableLibrary::new(idx, n).map_err(|e| invalid("library", "indices", e.to_string()))?
            }
            (None, Some(m)) => {
                let mask: LibraryMask =
                    m.parse().map_err(|e: koopid_core::Error| invalid("library", "mask", e.to_string()))?;
                if mask.len() != n {
                    return Err(invalid(
                        "library",
                        "mask",
                        format!("mask has {} bits, catalog has {n} entries", mask.len()),
                    ));
                }
                mask.decode().map_err(|e| invalid("library", "mask", e.to_string()))?
            }
            (None, None) => {
                ObservableLibrary::new(&[1, 2, 4, 9], n).map_err(|e| invalid("library", "indices", e.to_string()))?
            }
        };

        let m = &raw.meta;
        let g = &raw.gp;
        let gp = GpHyper {
            sigma0_sq: g.sigma0_sq,
            length_scale: g.length_scale.unwrap_or_else(|| GpHyper::for_dim(n).length_scale),
            noise_sq: g.noise_sq,
            jitter: g.jitter,
        };
        gp.validate().map_err(|e| invalid("gp", "sigma0_sq", e.to_string()))?;
        let meta = MetaConfig {
            lambda_sparsity: m.lambda_sparsity,
            t_outer: m.t_outer,
            n_init: m.n_init,
            patience: m.patience,
            gp: Some(gp),
            seed: m.seed,
            restarts: m.restarts,
        };
        if m.t_outer == 0 {
            return Err(invalid("meta", "t_outer", "must be >= 1".into()));
        }
        if m.n_init == 0 {
            return Err(invalid("meta", "n_init", "must be >= 1".into()));
        }
        meta.validate().map_err(|e| invalid("meta", "lambda_sparsity", e.to_string()))?;

        let space = if m.whitelist.is_empty() {
            DesignSpace::full(n).map_err(|e| invalid("catalog", "exponents", e.to_string()))?
        } else {
            let masks = m
                .whitelist
                .iter()
                .map(|s| s.parse::<LibraryMask>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| invalid("meta", "whitelist", e.to_string()))?;
            DesignSpace::restricted(n, masks).map_err(|e| invalid("meta", "whitelist", e.to_string()))?
        };

        Ok(Self { raw, run, catalog, library, meta, space })
    }

    /// The configuration with the effective seed, as TOML.
    pub fn echo(&self) -> String {
        let mut raw = self.raw.clone();
        raw.meta.seed = self.meta.seed;
        toml::to_string(&raw).expect("config serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = seed;
        self.raw.meta.seed = seed;
        self
    }
}

fn describe(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg.to_string(),
    }
}

/// 1-based line of `key` inside `[section]`.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section && t.split('=').next().map(str::trim) == Some(key) {
            return Some(i + 1);
        }
    }
    None
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&toml::to_string(self).map_err(|_| fmt::Error)?)
    }
}
