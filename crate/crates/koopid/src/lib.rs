//! Experiment runner for `koopid-core`: configuration files, batch
//! evaluation of observable libraries, and the CSV/JSON artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod evaluate;
pub mod output;

pub use config::{ConfigError, Experiment, ExperimentConfig};
