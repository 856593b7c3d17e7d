//! Batch commands behind the `bwsv` binary: corpus preparation, channel
//! simulation, extension-model training, speaker scoring, DET evaluation
//! and the min-DCF report over feature kinds and dimensions.
//!
//! Every command is a plain function so that tests and other drivers can
//! chain them without going through the process boundary.

// negated comparisons double as NaN guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod digest;
pub mod error;
pub mod experiment;

pub use error::{CliError, CliResult};
