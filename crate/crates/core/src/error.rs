// SPDX-License-Identifier: Apache-2.0

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("environment returned a non-finite reward ({0})")]
    NonFiniteReward(f64),
    #[error("k-means needs at least {k} distinct samples, got {distinct}")]
    TooFewSamples { k: usize, distinct: usize },
    #[error("no collision-free pose found after {0} samples")]
    NoFreePose(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("action {action} out of range (environment has {count} actions)")]
    InvalidAction { action: usize, count: usize },
    #[error("state dimensionality mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}
