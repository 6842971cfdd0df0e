// SPDX-License-Identifier: Apache-2.0

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context};
use bpa_lab::{formats, harness, Experiment, MetricsTable};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bpa",
    version,
    about = "Broad-persistent advice experiments and live sessions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config and write the per-episode metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of the config's list.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Aggregate a metrics CSV across seeds (CSV, or JSON for a .json path).
    Summarize {
        csv: PathBuf,
        #[arg(long, default_value_t = 1)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the live session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            out,
            seed_override,
        } => {
            let mut exp = Experiment::load(&config)?;
            if let Some(s) = seed_override {
                exp.config.seeds = vec![s];
            }
            let Some(out) = out.or_else(|| exp.config.output.clone()) else {
                bail!("no output path: pass --out or set `output` in the config");
            };
            let table: MetricsTable = harness::run_experiment(&exp)?;
            table.write_csv(&out)?;
            eprintln!("{} rows -> {}", table.rows.len(), out.display());
        }
        Cmd::Summarize { csv, window, out } => {
            if window == 0 {
                bail!("--window must be at least 1");
            }
            let rows = formats::read_metrics_csv(&csv)?;
            let summary = harness::summarize(&MetricsTable { rows }, window);
            summary.save(&out)?;
        }
        Cmd::Serve { port, host } => {
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(bpa_lab::service::serve(SocketAddr::new(host, port)))
                .with_context(|| format!("serving on {host}:{port}"))?;
        }
    }
    Ok(())
}
