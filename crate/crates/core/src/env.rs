// SPDX-License-Identifier: Apache-2.0

//! The step/reset contract shared by every environment.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub id: usize,
    pub label: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<S> {
    pub next_state: S,
    pub reward: f64,
    pub terminal: bool,
    /// Diagnostics, e.g. `"collision" => "true"`.
    pub info: BTreeMap<&'static str, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EpisodeLimit {
    pub max_steps: u32,
}

impl EpisodeLimit {
    pub const MOUNTAIN_CAR: EpisodeLimit = EpisodeLimit { max_steps: 1000 };
    pub const SELF_DRIVE: EpisodeLimit = EpisodeLimit { max_steps: 3000 };

    pub fn new(max_steps: u32) -> Self {
        assert!(max_steps > 0, "episode limit must be positive");
        Self { max_steps }
    }
}

/// What a generalizer sees of a state: its real-valued features, and the
/// canonical discrete id when the environment has one.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub features: &'a [f64],
    pub discrete: Option<u32>,
}

pub trait Environment {
    type State: Clone + PartialEq + core::fmt::Debug;

    fn actions(&self) -> &'static [Action];

    fn action_count(&self) -> usize {
        self.actions().len()
    }

    fn default_limit(&self) -> EpisodeLimit;

    /// Starts a new episode and returns its first state.
    fn reset(&mut self, rng: &mut RngStream) -> Self::State;

    fn step(&mut self, action: usize, rng: &mut RngStream) -> StepResult<Self::State>;

    fn state(&self) -> &Self::State;

    fn features(&self, state: &Self::State) -> Vec<f64>;

    /// Per-feature `(lo, hi)` range, used by grid discretizers.
    fn feature_bounds(&self) -> Vec<(f64, f64)>;

    fn discrete_id(&self, _state: &Self::State) -> Option<u32> {
        None
    }

    fn discrete_count(&self) -> Option<u32> {
        None
    }

    /// The hand-written near-optimal policy a simulated trainer consults.
    fn oracle_action(&self, state: &Self::State) -> usize;

    /// Every observation, when the observation space is finite and small.
    fn enumerate_states(&self) -> Option<Vec<Self::State>> {
        None
    }
}
