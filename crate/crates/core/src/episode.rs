// SPDX-License-Identifier: Apache-2.0

//! The interaction loop: observe, ask the advisor, arbitrate, act, learn.

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::advice::{AdviceMode, AdviceSource, AdviceStore, PprParams, Provenance};
use crate::advisors::Advisor;
use crate::agent::{LearnParams, QTable};
use crate::env::{Environment, EpisodeLimit, StateView};
use crate::generalize::{ClusterId, Domain, Generalizer, GeneralizerSpec, StagedGeneralizer};
use crate::rng::Streams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub mode: AdviceMode,
    pub learn: LearnParams,
    pub ppr: PprParams,
    /// Clusters that advice is stored under.
    pub generalizer: GeneralizerSpec,
    /// Discretization of states into Q-table rows.
    pub tabulation: GeneralizerSpec,
    /// Skip the advisor on clusters that already hold advice.
    pub suppress_queries_on_known_cluster: bool,
}

impl LearnerConfig {
    pub fn mountain_car(mode: AdviceMode) -> Self {
        let grid = GeneralizerSpec::UniformGrid {
            bins_per_dim: alloc::vec![20, 20],
        };
        Self {
            mode,
            learn: LearnParams::default(),
            ppr: PprParams::default(),
            generalizer: grid.clone(),
            tabulation: grid,
            suppress_queries_on_known_cluster: true,
        }
    }

    pub fn self_drive(mode: AdviceMode) -> Self {
        Self {
            mode,
            learn: LearnParams::default(),
            ppr: PprParams::default(),
            generalizer: GeneralizerSpec::Identity,
            tabulation: GeneralizerSpec::Identity,
            suppress_queries_on_known_cluster: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learn.validate()?;
        self.ppr.validate()?;
        self.generalizer.validate()?;
        self.tabulation.validate()?;
        if matches!(self.tabulation, GeneralizerSpec::KMeans { .. }) {
            return Err(Error::InvalidConfig(
                "the Q-table needs an identity or grid discretization".into(),
            ));
        }
        Ok(())
    }
}

/// Q-learning agent plus its advice memory.
#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    domain: Domain,
    tabulation: Generalizer,
    generalizer: StagedGeneralizer,
    q: QTable,
    store: AdviceStore,
}

impl Learner {
    pub fn new<E: Environment>(
        env: &E,
        config: LearnerConfig,
        streams: &mut Streams,
    ) -> Result<Self> {
        config.validate()?;
        let domain = Domain {
            bounds: env.feature_bounds(),
            discrete_count: env.discrete_count(),
        };
        let tabulation =
            Generalizer::fit(&config.tabulation, &domain, &[], &mut streams.generalizer)?;
        let generalizer = StagedGeneralizer::new(
            config.generalizer.clone(),
            &domain,
            &mut streams.generalizer,
        )?;
        let q = QTable::new(
            tabulation.cluster_count() as usize,
            env.action_count(),
            config.learn.q_init,
        );
        Ok(Self {
            config,
            domain,
            tabulation,
            generalizer,
            q,
            store: AdviceStore::new(),
        })
    }

    /// Swaps in an already fitted advice generalizer (e.g. loaded from disk).
    pub fn with_generalizer(mut self, g: Generalizer) -> Self {
        self.generalizer = StagedGeneralizer::from_fitted(g);
        self
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn store(&self) -> &AdviceStore {
        &self.store
    }

    pub fn generalizer(&self) -> &StagedGeneralizer {
        &self.generalizer
    }
}

/// Per-episode measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u32,
    pub steps: u32,
    pub total_reward: f64,
    /// Steps on which an advisor gave advice.
    pub interactions: u32,
    pub reused_steps: u32,
    pub psi: f64,
}

impl EpisodeMetrics {
    fn start(episode: u32, psi: f64) -> Self {
        Self {
            episode,
            steps: 0,
            total_reward: 0.0,
            interactions: 0,
            reused_steps: 0,
            psi,
        }
    }

    pub fn advised_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            f64::from(self.interactions) / f64::from(self.steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub episode: u32,
    /// 1-based index of this step within its episode.
    pub step: u32,
    pub action: usize,
    pub provenance: Provenance,
    pub cluster: ClusterId,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub terminal: bool,
    pub interaction: bool,
    pub psi: f64,
    pub collision: bool,
    /// Set when this step closed the episode.
    pub episode_end: Option<EpisodeMetrics>,
}

pub type BoxedAdvisor<E> = Box<dyn Advisor<E> + Send>;

/// Drives one environment, one learner and an optional advisor from a
/// single master seed.
pub struct Runner<E: Environment> {
    env: E,
    learner: Learner,
    advisor: Option<BoxedAdvisor<E>>,
    streams: Streams,
    limit: EpisodeLimit,
    episode: u32,
    state: E::State,
    current: EpisodeMetrics,
    needs_reset: bool,
}

impl<E: Environment> Runner<E> {
    pub fn new(
        mut env: E,
        config: LearnerConfig,
        advisor: Option<BoxedAdvisor<E>>,
        master_seed: u64,
        limit: EpisodeLimit,
    ) -> Result<Self> {
        let mut streams = Streams::new(master_seed);
        let learner = Learner::new(&env, config, &mut streams)?;
        let state = env.reset(&mut streams.env);
        let psi = learner.config.ppr.psi(0);
        Ok(Self {
            env,
            learner,
            advisor,
            streams,
            limit,
            episode: 0,
            state,
            current: EpisodeMetrics::start(0, psi),
            needs_reset: false,
        })
    }

    pub fn with_generalizer(mut self, g: Generalizer) -> Self {
        self.learner = self.learner.with_generalizer(g);
        self
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn limit(&self) -> EpisodeLimit {
        self.limit
    }

    /// Index of the episode the next step belongs to.
    pub fn episode(&self) -> u32 {
        if self.needs_reset {
            self.episode + 1
        } else {
            self.episode
        }
    }

    /// Steps taken so far in the current (not yet closed) episode.
    pub fn steps_in_episode(&self) -> u32 {
        if self.needs_reset {
            0
        } else {
            self.current.steps
        }
    }

    /// Metrics of the episode in progress.
    pub fn current(&self) -> &EpisodeMetrics {
        &self.current
    }

    pub fn psi(&self) -> f64 {
        self.learner.config.ppr.psi(self.episode())
    }

    /// Abandons the current episode and starts the next one.
    pub fn start_next_episode(&mut self) {
        self.needs_reset = true;
        self.begin_if_needed();
    }

    fn begin_if_needed(&mut self) {
        if self.needs_reset {
            self.needs_reset = false;
            self.episode += 1;
            self.state = self.env.reset(&mut self.streams.env);
            self.current =
                EpisodeMetrics::start(self.episode, self.learner.config.ppr.psi(self.episode));
        }
    }

    fn view_of<'a>(env: &E, features: &'a [f64], state: &E::State) -> StateView<'a> {
        StateView {
            features,
            discrete: env.discrete_id(state),
        }
    }

    fn maybe_fit(&mut self) -> Result<()> {
        if !self.learner.generalizer.ready_to_fit() {
            return Ok(());
        }
        let remap = self
            .learner
            .generalizer
            .fit_pending(&self.learner.domain, &mut self.streams.generalizer)?;
        let g = self
            .learner
            .generalizer
            .fitted()
            .expect("just fitted")
            .clone();
        self.learner.store.rekey(&remap, |raw| {
            g.assign(StateView {
                features: raw,
                discrete: None,
            })
        });
        if let Some(a) = self.advisor.as_mut() {
            a.rekey(&remap);
        }
        Ok(())
    }

    /// Executes one step. `live` is advice from a human for this step.
    pub fn step(&mut self, live: Option<usize>) -> Result<StepRecord> {
        self.begin_if_needed();
        let action_count = self.env.action_count();
        if let Some(a) = live {
            if a >= action_count {
                return Err(Error::InvalidAction {
                    action: a,
                    count: action_count,
                });
            }
        }
        let mode = self.learner.config.mode;
        let episode = self.episode;

        let features = self.env.features(&self.state);
        let view = Self::view_of(&self.env, &features, &self.state);
        let row = self.learner.tabulation.assign(view).0 as usize;
        self.learner.generalizer.observe(view);
        self.maybe_fit()?;
        let cluster = self.learner.generalizer.key(view);

        let epsilon = self.learner.config.learn.epsilon_at(episode);
        let default_action = self
            .learner
            .q
            .select_default(row, epsilon, &mut self.streams.agent);

        let mut advice = live.map(|a| (a, AdviceSource::Live));
        if advice.is_none() && mode != AdviceMode::None {
            let persistent = mode == AdviceMode::Persistent;
            let known = persistent
                && self.learner.config.suppress_queries_on_known_cluster
                && self.learner.store.contains(cluster);
            if let (Some(advisor), false) = (self.advisor.as_mut(), known) {
                if let Some(given) = advisor.query(
                    &self.env,
                    &self.state,
                    cluster,
                    persistent,
                    &mut self.streams.user,
                ) {
                    if given.action >= action_count {
                        return Err(Error::InvalidAction {
                            action: given.action,
                            count: action_count,
                        });
                    }
                    if persistent {
                        for s in &given.coverage {
                            let f = self.env.features(s);
                            let c = self
                                .learner
                                .generalizer
                                .key(Self::view_of(&self.env, &f, s));
                            self.learner
                                .store
                                .record(c, given.action, given.source, Some(f));
                        }
                    }
                    advice = Some((given.action, given.source));
                }
            }
        }
        let interaction = advice.is_some();

        let decision = self.learner.store.arbitrate(
            mode,
            advice,
            cluster,
            Some(&features),
            &self.learner.config.ppr,
            episode,
            default_action,
            &mut self.streams.agent,
        );

        let result = self.env.step(decision.action, &mut self.streams.env);
        if !result.reward.is_finite() {
            return Err(Error::NonFiniteReward(result.reward));
        }
        let next_features = self.env.features(&result.next_state);
        let next_row = self
            .learner
            .tabulation
            .assign(Self::view_of(&self.env, &next_features, &result.next_state))
            .0 as usize;
        self.learner.q.update(
            row,
            decision.action,
            result.reward,
            next_row,
            result.terminal,
            &self.learner.config.learn,
        );

        let m = &mut self.current;
        m.steps += 1;
        m.total_reward += result.reward;
        m.interactions += u32::from(interaction);
        m.reused_steps += u32::from(decision.provenance == Provenance::Reused);
        self.state = result.next_state;

        let done = result.terminal || m.steps >= self.limit.max_steps;
        let record = StepRecord {
            episode,
            step: m.steps,
            action: decision.action,
            provenance: decision.provenance,
            cluster,
            reward: result.reward,
            cumulative_reward: m.total_reward,
            terminal: result.terminal,
            interaction,
            psi: m.psi,
            collision: result.info.contains_key("collision"),
            episode_end: done.then_some(*m),
        };
        if done {
            self.needs_reset = true;
        }
        Ok(record)
    }

    /// Runs steps until the current episode ends.
    pub fn run_episode(&mut self) -> Result<EpisodeMetrics> {
        loop {
            if let Some(m) = self.step(None)?.episode_end {
                return Ok(m);
            }
        }
    }

    /// Runs `episodes` full episodes.
    pub fn run(&mut self, episodes: u32) -> Result<Vec<EpisodeMetrics>> {
        (0..episodes).map(|_| self.run_episode()).collect()
    }
}
