// SPDX-License-Identifier: Apache-2.0

//! Simulated trainers.
//!
//! A [`SimulatedUser`] is available on a step with probability
//! `availability`; when it speaks it gives the oracle's action with
//! probability `accuracy` and a uniformly chosen different action
//! otherwise. A [`BroadAdvisor`] holds a few rules over self-driving
//! observations, each of which speaks once and covers every matching
//! observation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::advice::AdviceSource;
use crate::env::Environment;
use crate::generalize::ClusterId;
use crate::rng::RngStream;
use crate::selfdrive::{SdAction, SdObservation, SelfDrive, FRONT, SENSOR_COUNT, VELOCITY_LEVELS};
use crate::{Error, Result};

/// A recommendation. `coverage` lists further states the advice applies to
/// (empty for state-based advice).
#[derive(Debug, Clone, PartialEq)]
pub struct Advice<S> {
    pub action: usize,
    pub source: AdviceSource,
    pub coverage: Vec<S>,
}

pub trait Advisor<E: Environment> {
    /// Consulted once per step. `persistent_target` is set when the agent
    /// keeps advice.
    fn query(
        &mut self,
        env: &E,
        state: &E::State,
        cluster: ClusterId,
        persistent_target: bool,
        rng: &mut RngStream,
    ) -> Option<Advice<E::State>>;

    /// Called when the agent's clusters are renumbered.
    fn rekey(&mut self, _remap: &BTreeMap<ClusterId, ClusterId>) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedUser {
    pub name: String,
    pub accuracy: f64,
    pub availability: f64,
    #[serde(skip)]
    advised_clusters: BTreeSet<ClusterId>,
}

impl SimulatedUser {
    pub fn new(name: impl Into<String>, accuracy: f64, availability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) || !(0.0..=1.0).contains(&availability) {
            return Err(Error::InvalidConfig(alloc::format!(
                "user accuracy/availability must lie in [0, 1], got {accuracy}/{availability}"
            )));
        }
        Ok(Self {
            name: name.into(),
            accuracy,
            availability,
            advised_clusters: BTreeSet::new(),
        })
    }

    pub fn optimistic() -> Self {
        Self::new("optimistic", 1.0, 1.0).unwrap()
    }

    pub fn realistic() -> Self {
        Self::new("realistic", 0.948_70, 0.473_16).unwrap()
    }

    pub fn pessimistic() -> Self {
        Self::new("pessimistic", 0.474_35, 0.236_58).unwrap()
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "optimistic" => Some(Self::optimistic()),
            "realistic" => Some(Self::realistic()),
            "pessimistic" => Some(Self::pessimistic()),
            _ => None,
        }
    }

    pub fn advised_clusters(&self) -> &BTreeSet<ClusterId> {
        &self.advised_clusters
    }

    /// One availability/accuracy draw against `oracle_action`.
    pub fn advise(
        &mut self,
        oracle_action: usize,
        action_count: usize,
        cluster: ClusterId,
        persistent_target: bool,
        rng: &mut RngStream,
    ) -> Option<usize> {
        if persistent_target && self.advised_clusters.contains(&cluster) {
            return None;
        }
        if !rng.bernoulli(self.availability) {
            return None;
        }
        let action = if rng.bernoulli(self.accuracy) || action_count < 2 {
            oracle_action
        } else {
            // uniform over the other actions
            let k = rng.below(action_count - 1);
            if k >= oracle_action {
                k + 1
            } else {
                k
            }
        };
        if persistent_target {
            self.advised_clusters.insert(cluster);
        }
        Some(action)
    }
}

impl<E: Environment> Advisor<E> for SimulatedUser {
    fn query(
        &mut self,
        env: &E,
        state: &E::State,
        cluster: ClusterId,
        persistent_target: bool,
        rng: &mut RngStream,
    ) -> Option<Advice<E::State>> {
        self.advise(
            env.oracle_action(state),
            env.action_count(),
            cluster,
            persistent_target,
            rng,
        )
        .map(|action| Advice {
            action,
            source: AdviceSource::Simulated,
            coverage: Vec::new(),
        })
    }

    fn rekey(&mut self, remap: &BTreeMap<ClusterId, ClusterId>) {
        self.advised_clusters = self
            .advised_clusters
            .iter()
            .filter_map(|c| remap.get(c).copied())
            .collect();
    }
}

/// A rule over self-driving observations: a sensor pattern (`None` matches
/// either value) and an inclusive velocity-index range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadRule {
    #[serde(default)]
    pub name: String,
    pub sensors: [Option<bool>; SENSOR_COUNT],
    #[serde(default = "full_velocity_range")]
    pub velocity: (u8, u8),
    pub action: usize,
}

fn full_velocity_range() -> (u8, u8) {
    (0, VELOCITY_LEVELS - 1)
}

impl BroadRule {
    pub fn matches(&self, obs: &SdObservation) -> bool {
        self.sensors
            .iter()
            .zip(obs.sensors)
            .all(|(want, got)| want.is_none_or(|w| w == got))
            && (self.velocity.0..=self.velocity.1).contains(&obs.velocity_index)
    }

    pub fn validate(&self) -> Result<()> {
        if SdAction::from_id(self.action).is_none() {
            return Err(Error::InvalidAction {
                action: self.action,
                count: 5,
            });
        }
        if self.velocity.0 > self.velocity.1 || self.velocity.1 >= VELOCITY_LEVELS {
            return Err(Error::InvalidConfig(
                "rule velocity range out of bounds".into(),
            ));
        }
        Ok(())
    }

    pub fn coverage(&self) -> Vec<SdObservation> {
        SdObservation::all().filter(|o| self.matches(o)).collect()
    }
}

/// `front blocked -> turn left` and `nothing blocked, not at top speed -> accelerate`.
pub fn default_rules() -> Vec<BroadRule> {
    let mut front = [None; SENSOR_COUNT];
    front[FRONT] = Some(true);
    alloc::vec![
        BroadRule {
            name: "front blocked".into(),
            sensors: front,
            velocity: full_velocity_range(),
            action: SdAction::Left as usize,
        },
        BroadRule {
            name: "clear road".into(),
            sensors: [Some(false); SENSOR_COUNT],
            velocity: (0, VELOCITY_LEVELS - 2),
            action: SdAction::Accel as usize,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadAdvisor {
    rules: Vec<BroadRule>,
    fired: Vec<bool>,
}

impl BroadAdvisor {
    pub fn new(rules: Vec<BroadRule>) -> Result<Self> {
        for r in &rules {
            r.validate()?;
        }
        let fired = alloc::vec![false; rules.len()];
        Ok(Self { rules, fired })
    }

    pub fn rules(&self) -> &[BroadRule] {
        &self.rules
    }

    pub fn fired_count(&self) -> usize {
        self.fired.iter().filter(|&&f| f).count()
    }

    /// First unfired rule matching `obs`; it is marked fired.
    pub fn broad_query(&mut self, obs: &SdObservation) -> Option<(usize, usize)> {
        let idx = self
            .rules
            .iter()
            .enumerate()
            .position(|(i, r)| !self.fired[i] && r.matches(obs))?;
        self.fired[idx] = true;
        Some((self.rules[idx].action, idx))
    }
}

impl Advisor<SelfDrive> for BroadAdvisor {
    fn query(
        &mut self,
        _env: &SelfDrive,
        state: &SdObservation,
        _cluster: ClusterId,
        _persistent_target: bool,
        _rng: &mut RngStream,
    ) -> Option<Advice<SdObservation>> {
        let (action, rule) = self.broad_query(state)?;
        Some(Advice {
            action,
            source: AdviceSource::Rule,
            coverage: self.rules[rule].coverage(),
        })
    }
}
