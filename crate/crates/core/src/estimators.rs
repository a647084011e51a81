//! Ridge, IPW-weighted ridge and the doubly robust estimator.
//!
//! The batch functions ([`ridge_fit`], [`ipw_ridge_fit`], [`dr_fit`]) are the
//! references. Policies keep a [`RidgeAccumulator`] so a refit costs one
//! `d × d` solve instead of a pass over the history.

use nalgebra::{DMatrix, DVector};

use crate::domain::{ContextSet, NORM_SLACK};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

/// One observed (context, reward, propensity) triple of a chosen arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ChosenRecord {
    pub context: DVector<f64>,
    pub reward: f64,
    pub propensity: f64,
}

/// Complete-record data: chosen arms only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChosenHistory {
    records: Vec<ChosenRecord>,
}

impl ChosenHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, context: DVector<f64>, reward: f64, propensity: f64) -> Result<()> {
        if !(propensity > 0.0 && propensity <= 1.0) {
            return Err(Error::invalid(format!("propensity must lie in (0,1], got {propensity}")));
        }
        if context.norm() > 1.0 + NORM_SLACK {
            return Err(Error::invalid("context norm exceeds 1"));
        }
        if !reward.is_finite() {
            return Err(Error::numeric("reward is not finite"));
        }
        if let Some(first) = self.records.first() {
            if first.context.len() != context.len() {
                return Err(Error::invalid("context dimension changed within a history"));
            }
        }
        self.records.push(ChosenRecord { context, reward, propensity });
        Ok(())
    }

    pub fn records(&self) -> &[ChosenRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Running `Σ w x xᵀ` and `Σ w x y` with a fixed ridge `λ`.
#[derive(Debug, Clone)]
pub struct RidgeAccumulator {
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    lambda: f64,
}

impl RidgeAccumulator {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(RidgeAccumulator { gram: DMatrix::zeros(dim, dim), moment: DVector::zeros(dim), lambda })
    }

    pub fn add(&mut self, x: &DVector<f64>, y: f64, weight: f64) {
        self.gram.ger(weight, x, x, 1.0);
        self.moment.axpy(weight * y, x, 1.0);
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Σ w x xᵀ + λ I`.
    pub fn regularized(&self) -> DMatrix<f64> {
        let mut a = self.gram.clone();
        for k in 0..a.nrows() {
            a[(k, k)] += self.lambda;
        }
        a
    }

    pub fn factor(&self) -> Result<SpdFactor> {
        SpdFactor::new(self.regularized())
    }

    pub fn solve(&self) -> Result<DVector<f64>> {
        self.factor()?.solve(&self.moment)
    }

    /// Solve reusing a factor from [`RidgeAccumulator::factor`].
    pub fn solve_with(&self, factor: &SpdFactor) -> Result<DVector<f64>> {
        factor.solve(&self.moment)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("ridge penalty must be positive, got {lambda}")))
    }
}

fn history_dim(history: &ChosenHistory, dim: usize) -> Result<usize> {
    match history.records.first() {
        Some(r) if r.context.len() != dim => {
            Err(Error::invalid(format!("history has dimension {}, requested {dim}", r.context.len())))
        }
        _ => Ok(dim),
    }
}

/// `(Σ x xᵀ + λI)⁻¹ Σ x y` over the chosen pairs; propensities are ignored.
pub fn ridge_fit(history: &ChosenHistory, dim: usize, lambda: f64) -> Result<DVector<f64>> {
    let dim = history_dim(history, dim)?;
    let mut acc = RidgeAccumulator::new(dim, lambda)?;
    for r in history.records() {
        acc.add(&r.context, r.reward, 1.0);
    }
    acc.solve()
}

/// Weight used by the IPW fit for a recorded propensity.
pub fn ipw_weight(propensity: f64, gamma: f64) -> f64 {
    1.0 / propensity.max(gamma)
}

/// Weighted ridge with per-record weight `1/max(propensity, γ)`.
pub fn ipw_ridge_fit(history: &ChosenHistory, dim: usize, lambda: f64, gamma: f64) -> Result<DVector<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0,1], got {gamma}")));
    }
    let dim = history_dim(history, dim)?;
    let mut acc = RidgeAccumulator::new(dim, lambda)?;
    for r in history.records() {
        acc.add(&r.context, r.reward, ipw_weight(r.propensity, gamma));
    }
    acc.solve()
}

/// DR pseudo-rewards for every arm of one round.
///
/// Unchosen arms get the imputation `x_iᵀβ̆`; the chosen arm gets
/// `(1 − 1/π)·x_iᵀβ̆ + Y/π`.
pub fn dr_pseudo_rewards(
    contexts: &ContextSet,
    chosen: usize,
    reward: f64,
    pi: &DVector<f64>,
    beta_check: &DVector<f64>,
) -> Result<DVector<f64>> {
    if chosen >= contexts.n_arms() || pi.len() != contexts.n_arms() {
        return Err(Error::invalid("chosen arm or probability vector does not match the context set"));
    }
    let p = pi[chosen];
    if !(p > 0.0) {
        return Err(Error::invalid(format!("selection probability of the chosen arm must be positive, got {p}")));
    }
    if beta_check.iter().any(|b| !b.is_finite()) {
        return Err(Error::numeric("imputation estimate is not finite"));
    }
    let imputed = contexts.scores(beta_check)?;
    let mut y = DVector::from_vec(imputed);
    y[chosen] = (1.0 - 1.0 / p) * y[chosen] + reward / p;
    Ok(y)
}

/// Batch DR ridge estimate from all `(contexts, pseudo-rewards)` rounds.
pub fn dr_fit(pooled: &[(ContextSet, DVector<f64>)], dim: usize, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let mut acc = RidgeAccumulator::new(dim, lambda)?;
    for (contexts, y) in pooled {
        if contexts.dim() != dim || y.len() != contexts.n_arms() {
            return Err(Error::invalid("pooled round does not match the requested dimension"));
        }
        for (x, &yi) in contexts.arms().iter().zip(y.iter()) {
            acc.add(x, yi, 1.0);
        }
    }
    acc.solve()
}
