// SPDX-License-Identifier: Apache-2.0

//! Seed sweeps and their summaries.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use bpa_core::EpisodeMetrics;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Experiment;
use crate::runner::AnyRunner;
use crate::{formats, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        formats::write_metrics_csv(&self.rows, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        let mut out = BufWriter::new(file);
        formats::write_metrics_csv(&self.rows, &mut out)
            .and_then(|()| out.flush())
            .map_err(|e| LabError::io(path, e))
    }

    pub fn seed(&self, seed: u64) -> impl Iterator<Item = &EpisodeMetrics> {
        self.rows
            .iter()
            .filter(move |r| r.seed == seed)
            .map(|r| &r.metrics)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    }
}

fn dump(dir: &Path, seed: u64, runner: &AnyRunner) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let learner = runner.learner();
    let write = |name: String, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| LabError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        f(&mut out)
            .and_then(|()| out.flush())
            .map_err(|e| LabError::io(&path, e))
    };
    write(format!("q_seed{seed}.csv"), &|o| {
        formats::write_qtable_csv(learner.q(), o)
    })?;
    write(format!("advice_seed{seed}.csv"), &|o| {
        formats::write_advice_csv(learner.store(), o)
    })?;
    if let Some(g) = learner.generalizer().fitted() {
        formats::save_generalizer(&dir.join(format!("generalizer_seed{seed}.json")), g)?;
    }
    Ok(())
}

fn run_seed(exp: &Experiment, seed: u64) -> Result<Vec<MetricsRow>> {
    let mut runner = exp.runner(seed)?;
    let metrics = runner.run(exp.config.episodes)?;
    if let Some(dir) = &exp.config.dump_dir {
        dump(dir, seed, &runner)?;
    }
    Ok(metrics
        .into_iter()
        .map(|metrics| MetricsRow { seed, metrics })
        .collect())
}

/// Runs every seed (in parallel) and assembles rows in seed-list order.
pub fn run_experiment(exp: &Experiment) -> Result<MetricsTable> {
    let per_seed: Vec<Result<Vec<MetricsRow>>> = exp
        .config
        .seeds
        .par_iter()
        .map(|&s| run_seed(exp, s))
        .collect();
    let mut rows = Vec::with_capacity(exp.config.seeds.len() * exp.config.episodes as usize);
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(MetricsTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: u32,
    pub seeds: usize,
    pub steps_mean: f64,
    pub steps_std: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub steps_ma: f64,
    pub reward_ma: f64,
    pub interactions_mean: f64,
    pub interactions_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub window: usize,
    pub episodes: Vec<EpisodeSummary>,
    pub total_interactions: u64,
    pub total_steps: u64,
    pub interactions_per_seed: BTreeMap<u64, u64>,
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trailing moving average; the first `window - 1` entries average what
/// is available.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let span = &xs[lo..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

pub fn summarize(table: &MetricsTable, window: usize) -> Summary {
    assert!(window >= 1, "window must be at least 1");
    let mut by_episode: BTreeMap<u32, Vec<&EpisodeMetrics>> = BTreeMap::new();
    let mut interactions_per_seed = BTreeMap::new();
    for r in &table.rows {
        by_episode
            .entry(r.metrics.episode)
            .or_default()
            .push(&r.metrics);
        *interactions_per_seed.entry(r.seed).or_insert(0) += u64::from(r.metrics.interactions);
    }
    let mut episodes: Vec<EpisodeSummary> = by_episode
        .into_iter()
        .map(|(episode, ms)| {
            let steps: Vec<f64> = ms.iter().map(|m| f64::from(m.steps)).collect();
            let rewards: Vec<f64> = ms.iter().map(|m| m.total_reward).collect();
            let inter: Vec<f64> = ms.iter().map(|m| f64::from(m.interactions)).collect();
            let (steps_mean, steps_std) = mean_std(&steps);
            let (reward_mean, reward_std) = mean_std(&rewards);
            EpisodeSummary {
                episode,
                seeds: ms.len(),
                steps_mean,
                steps_std,
                reward_mean,
                reward_std,
                steps_ma: 0.0,
                reward_ma: 0.0,
                interactions_mean: mean_std(&inter).0,
                interactions_total: ms.iter().map(|m| u64::from(m.interactions)).sum(),
            }
        })
        .collect();
    let steps: Vec<f64> = episodes.iter().map(|e| e.steps_mean).collect();
    let rewards: Vec<f64> = episodes.iter().map(|e| e.reward_mean).collect();
    for ((e, s), r) in episodes
        .iter_mut()
        .zip(moving_average(&steps, window))
        .zip(moving_average(&rewards, window))
    {
        e.steps_ma = s;
        e.reward_ma = r;
    }
    Summary {
        window,
        total_interactions: interactions_per_seed.values().sum(),
        total_steps: table.rows.iter().map(|r| u64::from(r.metrics.steps)).sum(),
        interactions_per_seed,
        episodes,
    }
}

impl Summary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.episodes {
            w.serialize(e).map_err(|source| LabError::Csv {
                path: "<summary>".into(),
                source,
            })?;
        }
        w.flush().map_err(|e| LabError::io("<summary>", e))
    }

    /// Writes JSON when `path` ends in `.json`, CSV otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "json") {
            return formats::write_json(path, self);
        }
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        self.write_csv(BufWriter::new(file)).map_err(|e| match e {
            LabError::Io { source, .. } => LabError::io(path, source),
            LabError::Csv { source, .. } => LabError::Csv {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[0.0, 10.0], 2), vec![0.0, 5.0]);
        assert_eq!(moving_average(&[3.0; 6], 4), vec![3.0; 6]);
        assert_eq!(moving_average(&[1.0, 2.0, 4.0], 1), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }
}
