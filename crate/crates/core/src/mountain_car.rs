// SPDX-License-Identifier: Apache-2.0

//! Mountain car: an underpowered car in a valley has to rock back and forth
//! to climb the right hill.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{Action, Environment, EpisodeLimit, StepResult};
use crate::rng::RngStream;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const START_LOW: f64 = -0.6;
pub const START_HIGH: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McState {
    pub x: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum McAction {
    Left = 0,
    None = 1,
    Right = 2,
}

impl McAction {
    pub fn from_id(id: usize) -> Option<Self> {
        match id {
            0 => Some(Self::Left),
            1 => Some(Self::None),
            2 => Some(Self::Right),
            _ => None,
        }
    }
}

pub static ACTIONS: [Action; 3] = [
    Action {
        id: 0,
        label: "left",
    },
    Action {
        id: 1,
        label: "none",
    },
    Action {
        id: 2,
        label: "right",
    },
];

pub fn reset(rng: &mut RngStream) -> McState {
    McState {
        x: rng.uniform_range(START_LOW, START_HIGH),
        v: 0.0,
    }
}

/// One tick of the classic dynamics. Returns `(next, reward, terminal)`.
pub fn step(s: McState, a: McAction) -> (McState, f64, bool) {
    let push = a as i32 - 1;
    let mut v = s.v + FORCE * f64::from(push) - GRAVITY * libm::cos(3.0 * s.x);
    v = v.clamp(-MAX_SPEED, MAX_SPEED);
    let x = (s.x + v).clamp(MIN_POSITION, MAX_POSITION);
    if x <= MIN_POSITION {
        // inelastic left wall
        v = v.max(0.0);
    }
    let terminal = x >= GOAL_POSITION;
    let reward = if terminal { 0.0 } else { -1.0 };
    (McState { x, v }, reward, terminal)
}

/// Pump energy: push in the direction of travel.
pub fn oracle_action(s: &McState) -> McAction {
    if s.v >= 0.0 {
        McAction::Right
    } else {
        McAction::Left
    }
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    state: McState,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl MountainCar {
    pub fn new() -> Self {
        Self {
            state: McState { x: -0.5, v: 0.0 },
        }
    }

    pub fn with_state(state: McState) -> Self {
        Self { state }
    }
}

impl Environment for MountainCar {
    type State = McState;

    fn actions(&self) -> &'static [Action] {
        &ACTIONS
    }

    fn default_limit(&self) -> EpisodeLimit {
        EpisodeLimit::MOUNTAIN_CAR
    }

    fn reset(&mut self, rng: &mut RngStream) -> McState {
        self.state = reset(rng);
        self.state
    }

    fn step(&mut self, action: usize, _rng: &mut RngStream) -> StepResult<McState> {
        let a = McAction::from_id(action).expect("mountain car action out of range");
        let (next, reward, terminal) = step(self.state, a);
        self.state = next;
        StepResult {
            next_state: next,
            reward,
            terminal,
            info: BTreeMap::new(),
        }
    }

    fn state(&self) -> &McState {
        &self.state
    }

    fn features(&self, s: &McState) -> Vec<f64> {
        vec![s.x, s.v]
    }

    fn feature_bounds(&self) -> Vec<(f64, f64)> {
        vec![(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)]
    }

    fn oracle_action(&self, s: &McState) -> usize {
        oracle_action(s) as usize
    }
}
