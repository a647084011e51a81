use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::plot::plot_metric;
use super::run::{ExperimentResult, Metric, SweepResult};
use crate::error::{Error, Result};
use crate::oracles::format_float;
use crate::policies::PolicyKind;

pub const CSV_HEADER: [&str; 10] = ["round", "metric", "mean", "sd", "policy", "N", "d", "v", "gamma", "seed"];

pub const ROUNDS_CSV: &str = "rounds.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MANIFEST: &str = "manifest.toml";

/// Metrics that get a plot.
pub const PLOTTED: [(Metric, &str); 2] =
    [(Metric::CumulativeRegret, "cumulative_regret.svg"), (Metric::EstimationError, "estimation_error.svg")];

/// Final-round rows of the summary file.
pub const FINAL_REGRET: &str = "final_cumulative_regret";
pub const FINAL_ERROR: &str = "final_estimation_error";
pub const EXHAUSTED_FRACTION: &str = "exhausted_fraction";

struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl CsvSink {
    fn create(path: PathBuf) -> Result<Self> {
        let writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        let mut sink = CsvSink { path, writer };
        sink.row(CSV_HEADER.map(String::from))?;
        Ok(sink)
    }

    fn row(&mut self, fields: [String; 10]) -> Result<()> {
        self.writer.write_record(&fields).map_err(|e| Error::io(&self.path, std::io::Error::other(e)))
    }

    fn record(&mut self, r: &ExperimentResult, round: usize, metric: &str, mean: f64, sd: f64) -> Result<()> {
        let c = &r.config;
        let gamma = match c.policy {
            PolicyKind::Lints => String::new(),
            _ => format_float(r.resolved.gamma),
        };
        self.row([
            round.to_string(),
            metric.to_string(),
            format_float(mean),
            format_float(sd),
            c.policy.to_string(),
            c.env.n_arms.to_string(),
            c.env.dim.to_string(),
            format_float(r.resolved.v),
            gamma,
            c.seed.to_string(),
        ])
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Per-round mean and sd of every metric, one row per (round, metric).
pub fn write_rounds_csv(path: &Path, results: &[&ExperimentResult]) -> Result<()> {
    let mut sink = CsvSink::create(path.to_path_buf())?;
    for r in results {
        for agg in &r.aggregates {
            for (t, (&m, &s)) in agg.mean.iter().zip(&agg.sd).enumerate() {
                sink.record(r, t + 1, agg.metric.as_str(), m, s)?;
            }
        }
    }
    sink.finish()
}

/// Final cumulative regret, final estimation error and exhausted fraction
/// per configuration, with `round = T`.
pub fn write_summary_csv(path: &Path, results: &[&ExperimentResult]) -> Result<()> {
    let mut sink = CsvSink::create(path.to_path_buf())?;
    for r in results {
        let t = r.config.horizon;
        let (m, s) = r.final_regret();
        sink.record(r, t, FINAL_REGRET, m, s)?;
        let err = r.aggregate(Metric::EstimationError);
        sink.record(r, t, FINAL_ERROR, err.mean[t - 1], err.sd[t - 1])?;
        let (m, s) = r.exhausted_fraction();
        sink.record(r, t, EXHAUSTED_FRACTION, m, s)?;
    }
    sink.finish()
}

#[derive(Debug, Serialize)]
struct Software {
    name: &'static str,
    version: &'static str,
    parallel: bool,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    software: Software,
    command: &'a str,
    config: &'a RunConfig,
}

/// Records the software version and the full configuration. Loading the
/// manifest with [`RunConfig::load`] reproduces the run.
pub fn write_manifest(path: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let manifest = Manifest {
        software: Software {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            parallel: cfg!(feature = "parallel"),
        },
        command,
        config,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn plot_all(dir: &Path, results: &[&ExperimentResult]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (metric, file) in PLOTTED {
        let lines: Vec<(String, Vec<f64>)> =
            results.iter().map(|r| (label(r), r.aggregate(metric).mean.clone())).collect();
        let path = dir.join(file);
        plot_metric(&path, metric.as_str(), &lines)?;
        written.push(path);
    }
    Ok(written)
}

fn label(r: &ExperimentResult) -> String {
    match r.config.policy {
        PolicyKind::Lints => format!("LinTS (v={})", r.resolved.v),
        PolicyKind::Blts => format!("BLTS (v={}, gamma={})", r.resolved.v, r.resolved.gamma),
        PolicyKind::Drts => format!("DRTS (v={})", r.resolved.v),
    }
}

/// Writes rounds, summary, plots and manifest for one experiment.
pub fn emit_run(dir: &Path, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let results = [result];
    let mut written = vec![dir.join(ROUNDS_CSV), dir.join(SUMMARY_CSV), dir.join(MANIFEST)];
    write_rounds_csv(&written[0], &results)?;
    write_summary_csv(&written[1], &results)?;
    write_manifest(&written[2], "run", &result.config)?;
    written.extend(plot_all(dir, &results)?);
    Ok(written)
}

/// Writes per-round series of the best cell per policy, a summary of every
/// cell, plots of the best cells and the manifest.
pub fn emit_sweep(dir: &Path, command: &str, config: &RunConfig, sweep: &SweepResult) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let best = sweep.best();
    let all: Vec<&ExperimentResult> = sweep.cells.iter().collect();
    let mut written = vec![dir.join(ROUNDS_CSV), dir.join(SUMMARY_CSV), dir.join(MANIFEST)];
    write_rounds_csv(&written[0], &best)?;
    write_summary_csv(&written[1], &all)?;
    write_manifest(&written[2], command, config)?;
    written.extend(plot_all(dir, &best)?);
    Ok(written)
}
