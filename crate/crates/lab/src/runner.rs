// SPDX-License-Identifier: Apache-2.0

//! One runner type over both environments, plus the render payload the
//! session service streams.

use bpa_core::selfdrive::{observe, Rect};
use bpa_core::{Environment, EpisodeMetrics, Learner, MountainCar, Runner, SelfDrive, StepRecord};
use serde::Serialize;

use crate::Result;

pub enum AnyRunner {
    MountainCar(Runner<MountainCar>),
    Selfdrive(Runner<SelfDrive>),
}

/// Environment-specific picture of the current state.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "environment", rename_all = "snake_case")]
pub enum StatePayload {
    MountainCar {
        x: f64,
        v: f64,
    },
    Selfdrive {
        px: f64,
        py: f64,
        /// Radians, clockwise from east in screen coordinates.
        heading: f64,
        velocity_index: u8,
        velocity: f64,
        sensors: [bool; 8],
        width: f64,
        height: f64,
        car_radius: f64,
        sensor_range: f64,
        obstacles: Vec<Rect>,
    },
}

macro_rules! each {
    ($self:expr, $r:ident => $body:expr) => {
        match $self {
            AnyRunner::MountainCar($r) => $body,
            AnyRunner::Selfdrive($r) => $body,
        }
    };
}

impl AnyRunner {
    pub fn step(&mut self, live: Option<usize>) -> Result<StepRecord> {
        Ok(each!(self, r => r.step(live))?)
    }

    pub fn run(&mut self, episodes: u32) -> Result<Vec<EpisodeMetrics>> {
        Ok(each!(self, r => r.run(episodes))?)
    }

    pub fn episode(&self) -> u32 {
        each!(self, r => r.episode())
    }

    pub fn steps_in_episode(&self) -> u32 {
        each!(self, r => r.steps_in_episode())
    }

    pub fn psi(&self) -> f64 {
        each!(self, r => r.psi())
    }

    pub fn start_next_episode(&mut self) {
        each!(self, r => r.start_next_episode())
    }

    pub fn learner(&self) -> &Learner {
        each!(self, r => r.learner())
    }

    pub fn action_count(&self) -> usize {
        each!(self, r => r.env().action_count())
    }

    pub fn action_labels(&self) -> Vec<&'static str> {
        each!(self, r => r.env().actions().iter().map(|a| a.label).collect())
    }

    pub fn payload(&self) -> StatePayload {
        match self {
            AnyRunner::MountainCar(r) => {
                let s = r.env().state();
                StatePayload::MountainCar { x: s.x, v: s.v }
            }
            AnyRunner::Selfdrive(r) => {
                let env = r.env();
                let (pose, map) = (env.pose(), env.map());
                StatePayload::Selfdrive {
                    px: pose.px,
                    py: pose.py,
                    heading: pose.heading,
                    velocity_index: pose.velocity_index,
                    velocity: pose.velocity(),
                    sensors: observe(pose, map).sensors,
                    width: map.width,
                    height: map.height,
                    car_radius: map.car_radius,
                    sensor_range: map.sensor_range,
                    obstacles: map.obstacles.clone(),
                }
            }
        }
    }
}
