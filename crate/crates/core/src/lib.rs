//! Finite-time identification of Koopman generators from filtered lifted
//! data, plus Bayesian search over observable libraries.
//!
//! `no_std` with `alloc`. IO and the command line live in the `koopid` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod filters;
pub mod gp;
pub mod identifier;
pub mod linalg;
pub mod memory;
pub mod meta;
pub mod observables;
pub mod ode;
pub mod plant;

pub use error::{Error, Result};
pub use filters::{FilterState, NormalizedSnapshot};
pub use gp::{GpHyper, GpModel};
pub use identifier::{FlowConfig, KoopmanEstimate, RunConfig, RunOutcome, RunSummary, StackPolicy};
pub use linalg::Matrix;
pub use memory::{HistoryStack, Replacement};
pub use meta::{BoResult, DesignSpace, MaskEvaluator, MetaConfig, MetaRecord, OracleResult};
pub use observables::{default_catalog, LibraryMask, ObservableCatalog, ObservableLibrary};
pub use plant::{IdentityInput, InputMap, PlantParams};
