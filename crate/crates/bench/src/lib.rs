//! Experiment harness: dataset files, checkpoints, training runs and the
//! evaluation studies, shared by the `cfo` binary and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
