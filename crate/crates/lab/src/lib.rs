// SPDX-License-Identifier: Apache-2.0

//! Experiment harness, file formats and the live session service built on
//! `bpa-core`.

pub mod config;
mod error;
pub mod formats;
pub mod harness;
pub mod runner;
pub mod service;

pub use crate::config::{AdvisorSpec, EnvironmentId, Experiment, ExperimentConfig, UserSpec};
pub use crate::error::LabError;
pub use crate::harness::{run_experiment, summarize, MetricsRow, MetricsTable, Summary};

pub type Result<T, E = LabError> = std::result::Result<T, E>;
