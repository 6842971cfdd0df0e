// SPDX-License-Identifier: Apache-2.0

//! Broad-persistent advice for interactive reinforcement learning.
//!
//! A tabular Q-learning agent can be assisted by a trainer that recommends
//! actions. Instead of using each recommendation once and discarding it, the
//! agent keeps it in an [`advice::AdviceStore`] keyed by a cluster of states
//! (see [`generalize`]) and keeps replaying it through probabilistic policy
//! reuse, so the trainer has to speak far less often.
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the experiment
//! runner, the CLI and the live session service live in `bpa-lab`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod advice;
pub mod advisors;
pub mod agent;
pub mod env;
pub mod episode;
mod error;
pub mod generalize;
mod math;
pub mod mountain_car;
pub mod rng;
pub mod selfdrive;

pub use crate::advice::{AdviceMode, AdviceSource, AdviceStore, PprParams, Provenance};
pub use crate::advisors::{Advice, Advisor, BroadAdvisor, BroadRule, SimulatedUser};
pub use crate::agent::{LearnParams, QTable};
pub use crate::env::{Action, Environment, EpisodeLimit, StateView, StepResult};
pub use crate::episode::{EpisodeMetrics, Learner, LearnerConfig, Runner, StepRecord};
pub use crate::error::Error;
pub use crate::generalize::{ClusterId, Generalizer, GeneralizerSpec};
pub use crate::mountain_car::MountainCar;
pub use crate::rng::{derive_stream, RngStream};
pub use crate::selfdrive::{ArenaMap, SelfDrive};

pub type Result<T, E = Error> = core::result::Result<T, E>;
