//! Experiment harness: builds datasets from an [`ExperimentSpec`], runs the
//! supervised, self-training and FlexSSL arms, and writes long-format CSV
//! and JSON summaries.

pub mod cli;
pub mod commands;
pub mod error;
pub mod output;
pub mod runner;
pub mod spec;

pub use error::{Error, Result};
pub use spec::{DatasetKind, ExperimentSpec};
