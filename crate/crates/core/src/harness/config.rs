use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::LambdaSchedule;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::policies::{Imputation, PolicyKind};
use crate::probcalc::{exploration_v, ProbConfig, QmcPoints, MIN_QMC_POINTS};

/// A numeric hyperparameter that may be left to its default rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Param {
    #[default]
    Auto,
    Value(f64),
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Auto => f.write_str("auto"),
            Param::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Param::Auto);
        }
        s.parse::<f64>().map(Param::Value).map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

impl Serialize for Param {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Param::Auto => s.serialize_str("auto"),
            Param::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Param::Value(v)),
            Raw::Int(v) => Ok(Param::Value(v as f64)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ_t = base·√t`.
    #[default]
    Algorithmic,
    /// The concentration-driven schedule; `lambda_base` is ignored.
    Theoretical,
}

/// Hyperparameter grids searched by `sweep` and `figure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default = "default_v_grid")]
    pub v: Vec<f64>,
    /// Thresholds for BLTS. DRTS always uses `1/(N+1)`.
    #[serde(default = "default_gamma_grid")]
    pub gamma: Vec<f64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
}

fn default_v_grid() -> Vec<f64> {
    vec![0.001, 0.01, 0.1, 1.0]
}

fn default_gamma_grid() -> Vec<f64> {
    vec![0.01, 0.05, 0.1]
}

fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { v: default_v_grid(), gamma: default_gamma_grid(), policies: default_policies() }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub policy: PolicyKind,
    #[serde(alias = "T")]
    pub horizon: usize,
    pub reps: usize,
    pub v: Param,
    pub gamma: Param,
    pub lambda_mode: LambdaMode,
    pub lambda_base: f64,
    pub delta: f64,
    pub qmc_points: usize,
    pub qmc_kind: QmcPoints,
    /// Seeds the policies' randomness; the environment has its own seed.
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Ridge penalty of the LinTS/BLTS estimators and of the DRTS imputation.
    pub ridge_lambda: f64,
    pub imputation: Imputation,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvSpec::default(),
            policy: PolicyKind::Drts,
            horizon: 2000,
            reps: 10,
            v: Param::Auto,
            gamma: Param::Auto,
            lambda_mode: LambdaMode::Algorithmic,
            lambda_base: 1.0,
            delta: 0.1,
            qmc_points: 200,
            qmc_kind: QmcPoints::Grid,
            seed: 0,
            output_dir: PathBuf::from("out"),
            workers: None,
            ridge_lambda: 1.0,
            imputation: Imputation::Ridge,
            sweep: SweepGrid::default(),
        }
    }
}

/// Hyperparameters after applying the `auto` rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub v: f64,
    pub gamma: f64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // A manifest nests the configuration under `[config]`.
        let table = match (table.get("software"), table.get("config")) {
            (Some(_), Some(toml::Value::Table(inner))) => inner.clone(),
            _ => table,
        };
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(config)
    }

    /// Reads a configuration file or a manifest written by a previous run.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schedule(&self) -> LambdaSchedule {
        match self.lambda_mode {
            LambdaMode::Algorithmic => LambdaSchedule::Algorithmic { base: self.lambda_base },
            LambdaMode::Theoretical => LambdaSchedule::Theoretical { n_arms: self.env.n_arms, delta: self.delta },
        }
    }

    /// `gamma = auto` is `1/(N+1)`; `v = auto` is the exploration scale at
    /// that `gamma` (at `1/(N+1)` for LinTS).
    pub fn resolve(&self) -> Result<Resolved> {
        let n = self.env.n_arms;
        let gamma = match self.gamma {
            Param::Auto => 1.0 / (n as f64 + 1.0),
            Param::Value(g) => g,
        };
        let v = match self.v {
            Param::Value(v) => v,
            Param::Auto => {
                let g = match self.policy {
                    PolicyKind::Drts => gamma,
                    _ if gamma >= 1.0 / (n as f64 + 1.0) && gamma < 1.0 / n as f64 => gamma,
                    _ => 1.0 / (n as f64 + 1.0),
                };
                exploration_v(n, g).map_err(|e| Error::Config(e.to_string()))?
            }
        };
        Ok(Resolved { v, gamma })
    }

    pub fn prob_config(&self, gamma: f64) -> ProbConfig {
        ProbConfig { gamma, qmc_points: self.qmc_points, delta: self.delta, points: self.qmc_kind }
    }

    /// Checks every field; failures are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        self.env.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if self.reps < 1 {
            return fail("reps must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if !(self.lambda_base > 0.0 && self.lambda_base.is_finite()) {
            return fail(format!("lambda_base must be positive, got {}", self.lambda_base));
        }
        if !(self.ridge_lambda > 0.0 && self.ridge_lambda.is_finite()) {
            return fail(format!("ridge_lambda must be positive, got {}", self.ridge_lambda));
        }
        if self.qmc_points < MIN_QMC_POINTS {
            return fail(format!("qmc_points must be at least {MIN_QMC_POINTS}, got {}", self.qmc_points));
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1".into());
        }
        if let Imputation::Fixed(b) = &self.imputation {
            if b.len() != self.env.dim {
                return fail(format!("fixed imputation has length {}, expected {}", b.len(), self.env.dim));
            }
        }
        let r = self.resolve()?;
        if !(r.v >= 0.0 && r.v.is_finite()) {
            return fail(format!("v must be a non-negative number, got {}", r.v));
        }
        match self.policy {
            PolicyKind::Drts => {
                self.prob_config(r.gamma).validate(self.env.n_arms).map_err(|e| Error::Config(e.to_string()))?
            }
            PolicyKind::Blts if !(r.gamma > 0.0 && r.gamma <= 1.0) => {
                return fail(format!("gamma must lie in (0,1], got {}", r.gamma));
            }
            _ => {}
        }
        Ok(())
    }

    /// Applies command-line overrides on top of this configuration.
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident).+ <- $src:ident) => {
                if let Some(value) = o.$src.clone() {
                    self.$($field).+ = value;
                }
            };
        }
        set!(policy <- policy);
        set!(horizon <- horizon);
        set!(reps <- reps);
        set!(v <- v);
        set!(gamma <- gamma);
        set!(lambda_mode <- lambda_mode);
        set!(lambda_base <- lambda_base);
        set!(delta <- delta);
        set!(qmc_points <- qmc_points);
        set!(qmc_kind <- qmc_kind);
        set!(seed <- seed);
        set!(output_dir <- output_dir);
        set!(ridge_lambda <- ridge_lambda);
        set!(env.n_arms <- n_arms);
        set!(env.dim <- dim);
        set!(env.rho <- rho);
        set!(env.sigma <- sigma);
        set!(env.seed <- env_seed);
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if let Some(grid) = &o.v_grid {
            self.sweep.v = grid.clone();
        }
        if let Some(grid) = &o.gamma_grid {
            self.sweep.gamma = grid.clone();
        }
        if let Some(p) = &o.policies {
            self.sweep.policies = p.clone();
        }
    }
}

/// Command-line flags, one per configuration key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    #[arg(long, short = 'T')]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Exploration scale, or "auto".
    #[arg(long)]
    pub v: Option<Param>,
    /// Threshold, or "auto" for 1/(N+1).
    #[arg(long)]
    pub gamma: Option<Param>,
    #[arg(long, value_enum)]
    pub lambda_mode: Option<LambdaMode>,
    #[arg(long)]
    pub lambda_base: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub qmc_points: Option<usize>,
    #[arg(long, value_parser = parse_qmc_kind)]
    pub qmc_kind: Option<QmcPoints>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    #[arg(long = "n-arms", short = 'N')]
    pub n_arms: Option<usize>,
    #[arg(long, short = 'd')]
    pub dim: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub env_seed: Option<u64>,
    /// Comma-separated sweep grid for v.
    #[arg(long, value_delimiter = ',')]
    pub v_grid: Option<Vec<f64>>,
    /// Comma-separated sweep grid for the BLTS threshold.
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    /// Comma-separated policies to sweep.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<PolicyKind>>,
}

fn parse_qmc_kind(s: &str) -> std::result::Result<QmcPoints, String> {
    match s {
        "grid" => Ok(QmcPoints::Grid),
        "sobol" => Ok(QmcPoints::Sobol),
        _ => Err(format!("expected grid or sobol, got {s:?}")),
    }
}
