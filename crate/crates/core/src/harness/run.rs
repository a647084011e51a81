use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{Resolved, RunConfig};
use crate::domain::{compute_regret, MetricsSeries};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::par::{try_map_indexed, Execution};
use crate::policies::{Blts, Drts, LinTs, Policy, PolicyKind};
use crate::probcalc::QmcRule;
use crate::rng::{self, Purpose};

/// Per-round quantities aggregated across replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    InstantaneousRegret,
    CumulativeRegret,
    EstimationError,
    Resamples,
    Exhausted,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::InstantaneousRegret,
        Metric::CumulativeRegret,
        Metric::EstimationError,
        Metric::Resamples,
        Metric::Exhausted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::InstantaneousRegret => "instantaneous_regret",
            Metric::CumulativeRegret => "cumulative_regret",
            Metric::EstimationError => "estimation_error",
            Metric::Resamples => "resamples",
            Metric::Exhausted => "exhausted",
        }
    }

    pub fn values(&self, s: &MetricsSeries) -> Vec<f64> {
        match self {
            Metric::InstantaneousRegret => s.instantaneous_regret.clone(),
            Metric::CumulativeRegret => s.cumulative_regret.clone(),
            Metric::EstimationError => s.estimation_error.clone(),
            Metric::Resamples => s.resamples.iter().map(|&r| r as f64).collect(),
            Metric::Exhausted => s.exhausted.iter().map(|&e| f64::from(u8::from(e))).collect(),
        }
    }
}

/// Mean and sample standard deviation (`n − 1` denominator, 0 for `n = 1`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub metric: Metric,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Aggregates per round across episodes of equal length.
pub fn aggregate(series: &[MetricsSeries], metric: Metric) -> Aggregate {
    let per_rep: Vec<Vec<f64>> = series.iter().map(|s| metric.values(s)).collect();
    let len = per_rep.first().map_or(0, Vec::len);
    let (mean, sd) = (0..len).map(|t| mean_sd(&per_rep.iter().map(|r| r[t]).collect::<Vec<_>>())).unzip();
    Aggregate { metric, mean, sd }
}

/// All replications of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: RunConfig,
    pub resolved: Resolved,
    pub series: Vec<MetricsSeries>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    fn new(config: RunConfig, resolved: Resolved, series: Vec<MetricsSeries>) -> Self {
        let aggregates = Metric::ALL.iter().map(|&m| aggregate(&series, m)).collect();
        ExperimentResult { config, resolved, series, aggregates }
    }

    pub fn aggregate(&self, metric: Metric) -> &Aggregate {
        self.aggregates.iter().find(|a| a.metric == metric).expect("every metric is aggregated")
    }

    /// Mean and sd of the final cumulative regret.
    pub fn final_regret(&self) -> (f64, f64) {
        mean_sd(&self.series.iter().map(MetricsSeries::final_cumulative_regret).collect::<Vec<_>>())
    }

    pub fn exhausted_fraction(&self) -> (f64, f64) {
        mean_sd(&self.series.iter().map(MetricsSeries::exhausted_fraction).collect::<Vec<_>>())
    }
}

fn build_policy(config: &RunConfig, r: Resolved) -> Result<Box<dyn Policy>> {
    let d = config.env.dim;
    Ok(match config.policy {
        PolicyKind::Lints => Box::new(LinTs::new(d, config.ridge_lambda, r.v)?),
        PolicyKind::Blts => {
            let rule = QmcRule::new(config.qmc_kind, config.qmc_points)?;
            Box::new(Blts::new(d, config.ridge_lambda, r.v, r.gamma, rule)?)
        }
        PolicyKind::Drts => Box::new(Drts::new(
            config.env.n_arms,
            d,
            config.schedule(),
            r.v,
            config.prob_config(r.gamma),
            config.imputation.clone(),
            config.ridge_lambda,
        )?),
    })
}

/// One replication of `T` rounds.
///
/// Contexts, `β` and the noise come from streams keyed by the environment
/// seed and the replication index, so every policy faces the same draws;
/// the policy's own randomness is keyed by the run seed.
pub fn run_episode(config: &RunConfig, replication: usize) -> Result<MetricsSeries> {
    config.validate()?;
    let resolved = config.resolve()?;
    let env = Environment::new(config.env.clone())?;
    let rep = replication as u64;
    let model = env.true_model(&mut rng::stream(config.env.seed, rep, Purpose::Beta))?;
    let mut contexts_rng = rng::stream(config.env.seed, rep, Purpose::Contexts);
    let mut noise_rng = rng::stream(config.env.seed, rep, Purpose::Noise);
    let mut policy_rng = rng::stream(config.seed, rep, Purpose::Policy);
    let mut policy = build_policy(config, resolved)?;
    let n = config.env.n_arms;
    let mut metrics = MetricsSeries::with_capacity(config.horizon);

    for t in 1..=config.horizon {
        let round = |e: Error| Error::Round { round: t, source: Box::new(e) };
        let contexts = env.gen_contexts(t, &mut contexts_rng).map_err(round)?;
        let noise: Vec<f64> = (0..n).map(|_| noise_rng.sample::<f64, _>(StandardNormal)).collect();
        let decision = policy.decide(&contexts, &mut policy_rng).map_err(round)?;
        let chosen = decision.chosen;
        let reward = contexts.arm(chosen).dot(&model.beta) + model.sigma * noise[chosen];
        let regret = compute_regret(&contexts, &model.beta, chosen).map_err(round)?;
        policy.observe(&contexts, &decision, reward).map_err(round)?;
        let error = (policy.estimate() - &model.beta).norm();
        if !error.is_finite() {
            return Err(round(Error::numeric("estimate is not finite")));
        }
        metrics.push(regret, error, decision.resamples, decision.exhausted);
    }
    Ok(metrics)
}

pub fn run_experiment(config: &RunConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, Execution::from_workers(config.workers))
}

pub fn run_experiment_with(config: &RunConfig, exec: Execution) -> Result<ExperimentResult> {
    config.validate()?;
    let resolved = config.resolve()?;
    let series = try_map_indexed(exec, config.reps, |rep| run_episode(config, rep))?;
    Ok(ExperimentResult::new(config.clone(), resolved, series))
}

/// The configurations of the hyperparameter grid, in a fixed order: for each
/// policy, every `v`; BLTS additionally crosses `v` with every threshold.
pub fn sweep_cells(config: &RunConfig) -> Vec<RunConfig> {
    use super::config::Param;
    let mut cells = Vec::new();
    for &policy in &config.sweep.policies {
        for &v in &config.sweep.v {
            let mut c = config.clone();
            c.policy = policy;
            c.v = Param::Value(v);
            match policy {
                PolicyKind::Blts => {
                    for &g in &config.sweep.gamma {
                        let mut cg = c.clone();
                        cg.gamma = Param::Value(g);
                        cells.push(cg);
                    }
                }
                PolicyKind::Drts => {
                    c.gamma = Param::Auto;
                    cells.push(c);
                }
                PolicyKind::Lints => cells.push(c),
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<ExperimentResult>,
}

impl SweepResult {
    /// Per policy, the cell with the smallest mean final cumulative regret
    /// (first in grid order on ties).
    pub fn best(&self) -> Vec<&ExperimentResult> {
        let mut out: Vec<&ExperimentResult> = Vec::new();
        for cell in &self.cells {
            match out.iter_mut().find(|b| b.config.policy == cell.config.policy) {
                Some(b) if cell.final_regret().0 < b.final_regret().0 => *b = cell,
                Some(_) => {}
                None => out.push(cell),
            }
        }
        out
    }

    pub fn best_for(&self, policy: PolicyKind) -> Option<&ExperimentResult> {
        self.best().into_iter().find(|c| c.config.policy == policy)
    }
}

/// Runs every grid cell; all (cell, replication) pairs share one work queue.
pub fn run_sweep(config: &RunConfig) -> Result<SweepResult> {
    run_sweep_with(config, Execution::from_workers(config.workers))
}

pub fn run_sweep_with(config: &RunConfig, exec: Execution) -> Result<SweepResult> {
    let cells = sweep_cells(config);
    if cells.is_empty() {
        return Err(Error::Config("the sweep grid is empty".into()));
    }
    for c in &cells {
        c.validate()?;
    }
    let reps = config.reps;
    let mut flat = try_map_indexed(exec, cells.len() * reps, |k| run_episode(&cells[k / reps], k % reps))?.into_iter();
    let results = cells
        .into_iter()
        .map(|c| {
            let series: Vec<MetricsSeries> = flat.by_ref().take(reps).collect();
            let resolved = c.resolve()?;
            Ok(ExperimentResult::new(c, resolved, series))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { cells: results })
}
