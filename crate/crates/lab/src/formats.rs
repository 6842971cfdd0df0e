// SPDX-License-Identifier: Apache-2.0

//! On-disk formats: arena maps, rule sets, fitted generalizers and the CSV
//! dumps of Q-tables, advice stores and per-episode metrics.

use std::fs;
use std::io::Write;
use std::path::Path;

use bpa_core::advisors::BroadRule;
use bpa_core::{AdviceStore, ArenaMap, Generalizer, QTable};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::harness::MetricsRow;
use crate::{LabError, Result};

pub const METRICS_HEADER: &str = "seed,episode,steps,total_reward,interactions,reused_steps,psi";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| LabError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

pub fn load_map(path: &Path) -> Result<ArenaMap> {
    let map: ArenaMap = read_json(path)?;
    map.validate()?;
    Ok(map)
}

pub fn load_rules(path: &Path) -> Result<Vec<BroadRule>> {
    let rules: Vec<BroadRule> = read_json(path)?;
    for r in &rules {
        r.validate()?;
    }
    Ok(rules)
}

pub fn save_generalizer(path: &Path, g: &Generalizer) -> Result<()> {
    write_json(path, g)
}

pub fn load_generalizer(path: &Path) -> Result<Generalizer> {
    read_json(path)
}

pub fn write_qtable_csv<W: Write>(q: &QTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "state_id,action_id,q_value")?;
    for (s, a, v) in q.iter() {
        writeln!(out, "{s},{a},{v}")?;
    }
    Ok(())
}

pub fn write_advice_csv<W: Write>(store: &AdviceStore, mut out: W) -> std::io::Result<()> {
    writeln!(out, "cluster_id,action_id,source,times_reused")?;
    for (c, e) in store.iter() {
        writeln!(
            out,
            "{},{},{},{}",
            c.0,
            e.action,
            e.source.as_str(),
            e.times_reused
        )?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.seed, m.episode, m.steps, m.total_reward, m.interactions, m.reused_steps, m.psi
        )?;
    }
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let csv_err = |source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != METRICS_HEADER {
        return Err(LabError::Config(format!(
            "{}: expected header `{METRICS_HEADER}`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.deserialize::<(u64, u32, u32, f64, u32, u32, f64)>() {
        let (seed, episode, steps, total_reward, interactions, reused_steps, psi) =
            record.map_err(csv_err)?;
        rows.push(MetricsRow {
            seed,
            metrics: bpa_core::EpisodeMetrics {
                episode,
                steps,
                total_reward,
                interactions,
                reused_steps,
                psi,
            },
        });
    }
    Ok(rows)
}
