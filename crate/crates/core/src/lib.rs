//! Doubly robust Thompson sampling (DRTS) for linear contextual bandits.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`]: context sets, the DR sufficient statistics and regret bookkeeping.
//! * [`env`]: the synthetic correlated-Gaussian environment and its generators.
//! * [`estimators`]: ridge, IPW-weighted ridge and the DR pseudo-reward estimator.
//! * [`probcalc`]: selection probabilities, resampling budget and exploration scale.
//! * [`policies`]: LinTS, BLTS and DRTS decision rules.
//! * [`oracles`]: brute-force references and empirical validators.
//! * [`harness`]: configuration, experiment orchestration and output emission.
//!
//! Replications, sweep cells and Monte-Carlo oracles run data-parallel through
//! [`par`] when the `parallel` feature (on by default) is enabled, and
//! sequentially otherwise. Results are identical in both modes.

// NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod env;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod oracles;
pub mod par;
pub mod policies;
pub mod probcalc;
pub mod rng;

pub use domain::{compute_regret, ContextSet, DrState, LambdaSchedule, MetricsSeries, RoundOutcome, TrueModel};
pub use env::{ContextModel, EnvSpec, Environment};
pub use error::{Error, Result};
pub use policies::{Policy, PolicyDecision, PolicyKind};
pub use probcalc::ProbConfig;
