//! Decision rules: LinTS, BLTS and DRTS.
//!
//! Every policy sees the full context set when deciding but only the chosen
//! arm's reward when updating; DRTS is the only one that feeds unchosen
//! contexts into its estimator.

mod blts;
mod drts;
mod lints;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::ContextSet;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub use blts::{blts_decide, Blts};
pub use drts::{drts_decide, Drts, Imputation};
pub use lints::{lints_decide, LinTs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Lints,
    Blts,
    Drts,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Lints, PolicyKind::Blts, PolicyKind::Drts];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Lints => "lints",
            PolicyKind::Blts => "blts",
            PolicyKind::Drts => "drts",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lints" => Ok(PolicyKind::Lints),
            "blts" => Ok(PolicyKind::Blts),
            "drts" => Ok(PolicyKind::Drts),
            other => Err(Error::Config(format!("unknown policy '{other}'"))),
        }
    }
}

/// What a policy decided at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub chosen: usize,
    /// Candidate draws used, in `[1, M_t]`; always 1 for the baselines.
    pub resamples: usize,
    /// Every candidate `m_t` drawn this round, in order.
    pub candidates: Vec<usize>,
    pub pi_tilde: Option<DVector<f64>>,
    pub pi: Option<DVector<f64>>,
    pub exhausted: bool,
    /// Propensity recorded for the chosen arm (BLTS: `max(π̃, γ)`).
    pub propensity: Option<f64>,
}

impl PolicyDecision {
    fn single(chosen: usize) -> Self {
        PolicyDecision {
            chosen,
            resamples: 1,
            candidates: vec![chosen],
            pi_tilde: None,
            pi: None,
            exhausted: false,
            propensity: None,
        }
    }
}

pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn decide(&mut self, contexts: &ContextSet, rng: &mut StreamRng) -> Result<PolicyDecision>;

    /// Update with the chosen arm's reward only.
    fn observe(&mut self, contexts: &ContextSet, decision: &PolicyDecision, reward: f64) -> Result<()>;

    /// The estimate whose error is tracked.
    fn estimate(&self) -> &DVector<f64>;
}

/// Index of the best sampled score, lowest index on ties.
fn best_arm(scores: impl IntoIterator<Item = f64>) -> Result<usize> {
    let scores: Vec<f64> = scores.into_iter().collect();
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric("sampled score is NaN"));
    }
    Ok(crate::linalg::argmax(scores).expect("at least two arms"))
}
