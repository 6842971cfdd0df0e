// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration and the factory that turns it into runners.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bpa_core::advisors::{default_rules, BroadRule};
use bpa_core::episode::BoxedAdvisor;
use bpa_core::selfdrive::SelfDriveOptions;
use bpa_core::{
    AdviceMode, ArenaMap, BroadAdvisor, Environment, EpisodeLimit, Generalizer, GeneralizerSpec,
    LearnParams, LearnerConfig, MountainCar, PprParams, Runner, SelfDrive, SimulatedUser,
};
use serde::{Deserialize, Serialize};

use crate::formats;
use crate::runner::AnyRunner;
use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentId {
    MountainCar,
    #[serde(alias = "self_drive")]
    Selfdrive,
}

impl EnvironmentId {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).ok()
    }
}

/// A simulated user: a preset name alone, or a name with explicit rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub name: String,
    #[serde(default)]
    pub accuracy: Option<f64>,
    #[serde(default)]
    pub availability: Option<f64>,
}

impl UserSpec {
    pub fn build(&self) -> Result<SimulatedUser> {
        match (self.accuracy, self.availability) {
            (None, None) => SimulatedUser::preset(&self.name).ok_or_else(|| {
                LabError::Config(format!(
                    "unknown user preset `{}` (optimistic, realistic, pessimistic)",
                    self.name
                ))
            }),
            (Some(acc), Some(av)) => Ok(SimulatedUser::new(self.name.clone(), acc, av)?),
            _ => Err(LabError::Config(
                "a custom user needs both accuracy and availability".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdvisorSpec {
    #[default]
    None,
    User(UserSpec),
    /// Broad rules, inline or from a file. Neither given means the built-in set.
    Rules {
        #[serde(default)]
        rules: Option<Vec<BroadRule>>,
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentId,
    pub agent_mode: AdviceMode,
    /// Advice clusters; defaults per environment.
    #[serde(default)]
    pub generalizer: Option<GeneralizerSpec>,
    /// Q-table discretization; defaults per environment.
    #[serde(default)]
    pub tabulation: Option<GeneralizerSpec>,
    #[serde(default)]
    pub ppr: PprParams,
    #[serde(default)]
    pub learn: LearnParams,
    #[serde(default)]
    pub advisor: AdvisorSpec,
    pub episodes: u32,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub max_steps: Option<u32>,
    #[serde(default)]
    pub suppress_queries_on_known_cluster: Option<bool>,
    /// Arena map file; the built-in map when absent.
    #[serde(default)]
    pub map: Option<PathBuf>,
    #[serde(default)]
    pub selfdrive: SelfDriveOptions,
    /// Pre-fitted advice generalizer, replacing `generalizer`.
    #[serde(default)]
    pub generalizer_path: Option<PathBuf>,
    /// Where per-seed Q-table and advice-store dumps go, if anywhere.
    #[serde(default)]
    pub dump_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(
        environment: EnvironmentId,
        agent_mode: AdviceMode,
        episodes: u32,
        seeds: Vec<u64>,
    ) -> Self {
        Self {
            environment,
            agent_mode,
            generalizer: None,
            tabulation: None,
            ppr: PprParams::default(),
            learn: LearnParams::default(),
            advisor: AdvisorSpec::None,
            episodes,
            seeds,
            output: None,
            max_steps: None,
            suppress_queries_on_known_cluster: None,
            map: None,
            selfdrive: SelfDriveOptions::default(),
            generalizer_path: None,
            dump_dir: None,
        }
    }

    pub fn with_advisor(mut self, advisor: AdvisorSpec) -> Self {
        self.advisor = advisor;
        self
    }

    pub fn learner_config(&self) -> LearnerConfig {
        let mut c = match self.environment {
            EnvironmentId::MountainCar => LearnerConfig::mountain_car(self.agent_mode),
            EnvironmentId::Selfdrive => LearnerConfig::self_drive(self.agent_mode),
        };
        c.learn = self.learn;
        c.ppr = self.ppr;
        if let Some(g) = &self.generalizer {
            c.generalizer = g.clone();
        }
        if let Some(t) = &self.tabulation {
            c.tabulation = t.clone();
        }
        if let Some(s) = self.suppress_queries_on_known_cluster {
            c.suppress_queries_on_known_cluster = s;
        }
        c
    }
}

/// A validated config with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    map: Arc<ArenaMap>,
    rules: Vec<BroadRule>,
    fitted: Option<Generalizer>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Experiment {
    /// Reads a config file. Relative paths inside it are taken from the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = formats::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::new(config, base)
    }

    pub fn new(mut config: ExperimentConfig, base: &Path) -> Result<Self> {
        for p in [
            &mut config.output,
            &mut config.map,
            &mut config.generalizer_path,
            &mut config.dump_dir,
        ]
        .into_iter()
        .flatten()
        {
            *p = resolve(base, p);
        }
        if let AdvisorSpec::Rules { path: Some(p), .. } = &mut config.advisor {
            *p = resolve(base, p);
        }

        if config.episodes == 0 {
            return Err(LabError::Config("episodes must be at least 1".into()));
        }
        if config.seeds.is_empty() {
            return Err(LabError::Config("seeds must not be empty".into()));
        }
        if config.max_steps == Some(0) {
            return Err(LabError::Config("max_steps must be at least 1".into()));
        }
        let map = match &config.map {
            Some(p) => formats::load_map(p)?,
            None => ArenaMap::default(),
        };
        let rules = match &config.advisor {
            AdvisorSpec::Rules { rules, path } => {
                if config.environment != EnvironmentId::Selfdrive {
                    return Err(LabError::Config(
                        "broad rules apply to the selfdrive environment only".into(),
                    ));
                }
                match (rules, path) {
                    (Some(_), Some(_)) => {
                        return Err(LabError::Config(
                            "give either inline rules or a rules path".into(),
                        ))
                    }
                    (Some(r), None) => r.clone(),
                    (None, Some(p)) => formats::load_rules(p)?,
                    (None, None) => default_rules(),
                }
            }
            AdvisorSpec::User(u) => {
                u.build()?;
                Vec::new()
            }
            AdvisorSpec::None => Vec::new(),
        };
        let fitted = config
            .generalizer_path
            .as_deref()
            .map(formats::load_generalizer)
            .transpose()?;
        let exp = Self {
            config,
            map: Arc::new(map),
            rules,
            fitted,
        };
        // surfaces every remaining problem (generalizer vs environment,
        // parameter ranges, map without free space) before anything runs
        exp.runner(exp.config.seeds[0])?;
        Ok(exp)
    }

    pub fn map(&self) -> &Arc<ArenaMap> {
        &self.map
    }

    pub fn limit(&self, default: EpisodeLimit) -> EpisodeLimit {
        self.config.max_steps.map_or(default, EpisodeLimit::new)
    }

    fn advisor<E: Environment>(&self) -> Result<Option<BoxedAdvisor<E>>> {
        Ok(match &self.config.advisor {
            AdvisorSpec::User(u) => Some(Box::new(u.build()?)),
            _ => None,
        })
    }

    fn finish<E: Environment>(&self, runner: Runner<E>) -> Runner<E> {
        match &self.fitted {
            Some(g) => runner.with_generalizer(g.clone()),
            None => runner,
        }
    }

    /// Fresh components for one seed.
    pub fn runner(&self, seed: u64) -> Result<AnyRunner> {
        let learner = self.config.learner_config();
        Ok(match self.config.environment {
            EnvironmentId::MountainCar => {
                let env = MountainCar::new();
                let limit = self.limit(env.default_limit());
                let r = Runner::new(env, learner, self.advisor()?, seed, limit)?;
                AnyRunner::MountainCar(self.finish(r))
            }
            EnvironmentId::Selfdrive => {
                let env = SelfDrive::new(self.map.clone(), self.config.selfdrive)?;
                let limit = self.limit(env.default_limit());
                let advisor: Option<BoxedAdvisor<SelfDrive>> = match &self.config.advisor {
                    AdvisorSpec::Rules { .. } => {
                        Some(Box::new(BroadAdvisor::new(self.rules.clone())?))
                    }
                    _ => self.advisor()?,
                };
                let r = Runner::new(env, learner, advisor, seed, limit)?;
                AnyRunner::Selfdrive(self.finish(r))
            }
        })
    }
}
