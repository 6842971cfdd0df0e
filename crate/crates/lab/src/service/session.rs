// SPDX-License-Identifier: Apache-2.0

//! The synchronous session state machine. The HTTP layer owns one of these
//! per session inside a task and feeds it messages in arrival order.

use std::collections::VecDeque;
use std::path::Path;

use bpa_core::selfdrive::SelfDriveOptions;
use bpa_core::{AdviceMode, GeneralizerSpec, LearnParams, PprParams, Provenance};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use crate::config::{AdvisorSpec, EnvironmentId, Experiment, ExperimentConfig};
use crate::runner::{AnyRunner, StatePayload};
use crate::LabError;

pub const DEFAULT_STEP_PERIOD_MS: u64 = 200;
pub const DEFAULT_MAX_EPISODES: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown environment `{0}`")]
    EnvUnknown(String),
    #[error("no session with id `{0}`")]
    SessionUnknown(String),
    #[error("session has finished all of its episodes")]
    SessionFinished,
    #[error("action {action} is not valid here (0..{count})")]
    ActionInvalid { action: i64, count: usize },
    #[error("{0}")]
    BadRequest(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EnvUnknown(_) => "ENV_UNKNOWN",
            Self::SessionUnknown(_) => "SESSION_UNKNOWN",
            Self::SessionFinished => "SESSION_FINISHED",
            Self::ActionInvalid { .. } => "ACTION_INVALID",
            Self::BadRequest(_) => "BAD_REQUEST",
        }
    }
}

impl From<LabError> for ServiceError {
    fn from(e: LabError) -> Self {
        Self::BadRequest(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Paused,
    Running,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Pause,
    StepOnce,
    Reset,
}

fn persistent() -> AdviceMode {
    AdviceMode::Persistent
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub environment: String,
    #[serde(default = "persistent")]
    pub agent_mode: AdviceMode,
    #[serde(default)]
    pub seed: u64,
    /// Optional simulated advisor running next to the human.
    #[serde(default)]
    pub advisor: AdvisorSpec,
    #[serde(default)]
    pub ppr: PprParams,
    #[serde(default)]
    pub learn: LearnParams,
    #[serde(default)]
    pub generalizer: Option<GeneralizerSpec>,
    #[serde(default)]
    pub tabulation: Option<GeneralizerSpec>,
    #[serde(default)]
    pub suppress_queries_on_known_cluster: Option<bool>,
    #[serde(default)]
    pub max_steps: Option<u32>,
    #[serde(default)]
    pub max_episodes: Option<u32>,
    #[serde(default)]
    pub step_period_ms: Option<u64>,
    #[serde(default)]
    pub selfdrive: SelfDriveOptions,
}

impl CreateSession {
    pub fn new(environment: &str, agent_mode: AdviceMode) -> Self {
        Self {
            environment: environment.to_owned(),
            agent_mode,
            seed: 0,
            advisor: AdvisorSpec::None,
            ppr: PprParams::default(),
            learn: LearnParams::default(),
            generalizer: None,
            tabulation: None,
            suppress_queries_on_known_cluster: None,
            max_steps: None,
            max_episodes: None,
            step_period_ms: None,
            selfdrive: SelfDriveOptions::default(),
        }
    }
}

/// What a client sees after each executed step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameView {
    pub episode: u32,
    /// 1-based index of the executed step within its episode; 0 before the
    /// first step of an episode.
    pub step: u32,
    pub state: StatePayload,
    pub action: Option<usize>,
    pub provenance: Option<Provenance>,
    pub last_reward: f64,
    pub cumulative_reward: f64,
    pub psi: f64,
    pub collision: bool,
    pub episode_end: bool,
    /// Queued advice dropped in favour of newer advice before this step.
    pub discarded_advice: u32,
    pub run_state: RunState,
}

pub struct Session {
    id: String,
    environment: EnvironmentId,
    agent_mode: AdviceMode,
    run_state: RunState,
    step_period_ms: u64,
    max_episodes: u32,
    runner: AnyRunner,
    /// (action, received sequence number)
    pending: VecDeque<(usize, u64)>,
    received: u64,
    dropped_on_reset: u32,
    /// Frame of the latest executed step.
    last_frame: Option<FrameView>,
    /// Set by a reset until the next step executes.
    reset_frame: Option<FrameView>,
    subscribers: Vec<UnboundedSender<FrameView>>,
}

impl Session {
    pub fn new(id: String, req: &CreateSession) -> Result<Self, ServiceError> {
        let environment = EnvironmentId::parse(&req.environment)
            .ok_or_else(|| ServiceError::EnvUnknown(req.environment.clone()))?;
        if let AdvisorSpec::Rules { path: Some(_), .. } = req.advisor {
            return Err(ServiceError::BadRequest(
                "rule files cannot be referenced over the wire".into(),
            ));
        }
        let max_episodes = req.max_episodes.unwrap_or(DEFAULT_MAX_EPISODES);
        if max_episodes == 0 {
            return Err(ServiceError::BadRequest(
                "max_episodes must be at least 1".into(),
            ));
        }
        let step_period_ms = req.step_period_ms.unwrap_or(DEFAULT_STEP_PERIOD_MS);
        if step_period_ms == 0 {
            return Err(ServiceError::BadRequest(
                "step_period_ms must be at least 1".into(),
            ));
        }
        let mut cfg =
            ExperimentConfig::new(environment, req.agent_mode, max_episodes, vec![req.seed]);
        cfg.advisor = req.advisor.clone();
        cfg.ppr = req.ppr;
        cfg.learn = req.learn;
        cfg.generalizer = req.generalizer.clone();
        cfg.tabulation = req.tabulation.clone();
        cfg.suppress_queries_on_known_cluster = req.suppress_queries_on_known_cluster;
        cfg.max_steps = req.max_steps;
        cfg.selfdrive = req.selfdrive;
        let exp = Experiment::new(cfg, Path::new("."))?;
        let runner = exp.runner(req.seed)?;
        Ok(Self {
            id,
            environment,
            agent_mode: req.agent_mode,
            run_state: RunState::Paused,
            step_period_ms,
            max_episodes,
            runner,
            pending: VecDeque::new(),
            received: 0,
            dropped_on_reset: 0,
            last_frame: None,
            reset_frame: None,
            subscribers: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn environment(&self) -> EnvironmentId {
        self.environment
    }

    pub fn agent_mode(&self) -> AdviceMode {
        self.agent_mode
    }

    pub fn run_state(&self) -> RunState {
        self.run_state
    }

    pub fn step_period_ms(&self) -> u64 {
        self.step_period_ms
    }

    pub fn runner(&self) -> &AnyRunner {
        &self.runner
    }

    pub fn action_labels(&self) -> Vec<&'static str> {
        self.runner.action_labels()
    }

    /// Queues advice for the next step and returns that step's index.
    pub fn advise(&mut self, action: i64) -> Result<u32, ServiceError> {
        let count = self.runner.action_count();
        if action < 0 || action as u64 >= count as u64 {
            return Err(ServiceError::ActionInvalid { action, count });
        }
        if self.run_state == RunState::Finished {
            return Err(ServiceError::SessionFinished);
        }
        self.received += 1;
        self.pending.push_back((action as usize, self.received));
        Ok(self.runner.steps_in_episode() + 1)
    }

    pub fn control(&mut self, cmd: Command) -> Result<(), ServiceError> {
        if self.run_state == RunState::Finished && cmd != Command::Pause {
            return Err(ServiceError::SessionFinished);
        }
        match cmd {
            Command::Run => self.run_state = RunState::Running,
            Command::Pause => {
                if self.run_state != RunState::Finished {
                    self.run_state = RunState::Paused;
                }
            }
            Command::StepOnce => {
                self.run_state = RunState::Paused;
                self.step()?;
            }
            Command::Reset => {
                if self.runner.episode() + 1 >= self.max_episodes {
                    self.run_state = RunState::Finished;
                    return Err(ServiceError::SessionFinished);
                }
                self.runner.start_next_episode();
                self.dropped_on_reset += self.pending.len() as u32;
                self.pending.clear();
                self.reset_frame = Some(self.idle_frame());
            }
        }
        Ok(())
    }

    fn idle_frame(&self) -> FrameView {
        FrameView {
            episode: self.runner.episode(),
            step: self.runner.steps_in_episode(),
            state: self.runner.payload(),
            action: None,
            provenance: None,
            last_reward: 0.0,
            cumulative_reward: 0.0,
            psi: self.runner.psi(),
            collision: false,
            episode_end: false,
            discarded_advice: 0,
            run_state: self.run_state,
        }
    }

    /// Executes one step, consuming the newest queued advice.
    pub fn step(&mut self) -> Result<FrameView, ServiceError> {
        if self.run_state == RunState::Finished {
            return Err(ServiceError::SessionFinished);
        }
        let live = self.pending.pop_back().map(|(a, _)| a);
        let discarded = self.pending.len() as u32 + std::mem::take(&mut self.dropped_on_reset);
        self.pending.clear();
        let rec = self
            .runner
            .step(live)
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        if rec.episode_end.is_some() && rec.episode + 1 >= self.max_episodes {
            self.run_state = RunState::Finished;
        }
        let frame = FrameView {
            episode: rec.episode,
            step: rec.step,
            state: self.runner.payload(),
            action: Some(rec.action),
            provenance: Some(rec.provenance),
            last_reward: rec.reward,
            cumulative_reward: rec.cumulative_reward,
            psi: rec.psi,
            collision: rec.collision,
            episode_end: rec.episode_end.is_some(),
            discarded_advice: discarded,
            run_state: self.run_state,
        };
        self.subscribers.retain(|tx| tx.send(frame.clone()).is_ok());
        self.last_frame = Some(frame.clone());
        self.reset_frame = None;
        Ok(frame)
    }

    /// The newest frame: the latest executed step, or the idle state before
    /// any step of the current episode.
    pub fn latest(&self) -> FrameView {
        let mut f = self
            .reset_frame
            .clone()
            .or_else(|| self.last_frame.clone())
            .unwrap_or_else(|| self.idle_frame());
        f.run_state = self.run_state;
        f
    }

    /// New frame stream. It opens with the latest executed frame, if any.
    pub fn subscribe(&mut self) -> UnboundedReceiver<FrameView> {
        let (tx, rx) = unbounded_channel();
        if let Some(f) = &self.last_frame {
            let _ = tx.send(f.clone());
        }
        self.subscribers.push(tx);
        rx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(env: &str, mode: AdviceMode) -> Session {
        Session::new("t".into(), &CreateSession::new(env, mode)).unwrap()
    }

    #[test]
    fn starts_paused_at_zero() {
        let s = session("selfdrive", AdviceMode::Persistent);
        assert_eq!(s.run_state(), RunState::Paused);
        let f = s.latest();
        assert_eq!((f.episode, f.step), (0, 0));
        assert_eq!(f.provenance, None);
    }

    #[test]
    fn unknown_environment() {
        let err = Session::new("t".into(), &CreateSession::new("bogus", AdviceMode::None)).err();
        assert_eq!(err.map(|e| e.code()), Some("ENV_UNKNOWN"));
    }

    #[test]
    fn advice_is_latest_wins() {
        let mut s = session("mountain_car", AdviceMode::Persistent);
        assert_eq!(s.advise(0), Ok(1));
        assert_eq!(s.advise(2), Ok(1));
        let f = s.step().unwrap();
        assert_eq!(f.action, Some(2));
        assert_eq!(f.provenance, Some(Provenance::Advisor));
        assert_eq!(f.discarded_advice, 1);
        assert_eq!(s.advise(1), Ok(2));
        assert_eq!(s.advise(3).unwrap_err().code(), "ACTION_INVALID");
        assert_eq!(s.advise(-1).unwrap_err().code(), "ACTION_INVALID");
    }

    #[test]
    fn finishes_after_max_episodes() {
        let mut req = CreateSession::new("mountain_car", AdviceMode::None);
        req.max_episodes = Some(2);
        req.max_steps = Some(3);
        let mut s = Session::new("t".into(), &req).unwrap();
        for _ in 0..5 {
            s.control(Command::StepOnce).unwrap();
        }
        assert_eq!(s.latest().episode, 1);
        s.control(Command::StepOnce).unwrap();
        assert_eq!(s.run_state(), RunState::Finished);
        assert_eq!(
            s.control(Command::Run).unwrap_err(),
            ServiceError::SessionFinished
        );
        assert_eq!(
            s.control(Command::StepOnce).unwrap_err(),
            ServiceError::SessionFinished
        );
    }
}
