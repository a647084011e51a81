//! Independent references and empirical validators.
//!
//! Nothing here reuses the quadrature, the closed-form resampling
//! probabilities or the Cholesky sampling path of the code under test: the
//! Monte-Carlo oracles draw from a symmetric square root of `V⁻¹` obtained by
//! eigendecomposition, and set memberships are evaluated with an explicit
//! LU inverse.

mod concentration;
mod selection;

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use concentration::{
    check_candidate_saturation, check_dr_unbiasedness, check_dr_unbiasedness_with_sampler, check_martingale_norm,
    check_min_eigen, log_log_slope, martingale_norms, DirectionProcess, MartingaleCheck, MartingaleReport,
    MinEigenCheck, MinEigenLambda, SaturationReport,
};
pub use selection::{
    mc_selection_prob, mc_selection_prob_shared, mc_selection_prob_with, simulate_stopping_process,
    super_unsaturated_set,
};

/// One row of an oracle report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointReport {
    pub checkpoint: usize,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Shortest representation that parses back to the same `f64`; exponent
/// notation for very small or large magnitudes.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

/// Writes report rows as `check,checkpoint,statistic,bound,pass`.
pub fn write_report_csv(path: &Path, rows: &[(String, CheckpointReport)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record(["check", "checkpoint", "statistic", "bound", "pass"])
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for (name, r) in rows {
        w.write_record([
            name.clone(),
            r.checkpoint.to_string(),
            format_float(r.statistic),
            format_float(r.bound),
            r.pass.to_string(),
        ])
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
