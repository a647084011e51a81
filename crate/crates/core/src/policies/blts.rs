use nalgebra::DVector;

use super::{best_arm, Policy, PolicyDecision, PolicyKind};
use crate::domain::ContextSet;
use crate::error::{Error, Result};
use crate::estimators::{ipw_weight, RidgeAccumulator};
use crate::linalg::SpdFactor;
use crate::probcalc::{arm_win_mass, QmcRule};
use crate::rng::StreamRng;

/// Per-arm draws `β̃_i ~ N(β̂_ipw, v² A_w⁻¹)` around the IPW-weighted ridge fit,
/// `A_w = Σ w x xᵀ + λ I`. The recorded propensity is `max(π̃_chosen, γ)`.
pub fn blts_decide(
    gram: &SpdFactor,
    estimate: &DVector<f64>,
    contexts: &ContextSet,
    v: f64,
    gamma: f64,
    rule: &QmcRule,
    rng: &mut StreamRng,
) -> Result<PolicyDecision> {
    if gram.dim() != contexts.dim() || estimate.len() != contexts.dim() {
        return Err(Error::invalid("BLTS state does not match the context dimension"));
    }
    let scores = contexts.arms().iter().map(|x| {
        if v == 0.0 {
            x.dot(estimate)
        } else {
            x.dot(&gram.sample_inverse(estimate, v, rng))
        }
    });
    let chosen = best_arm(scores)?;
    let means = contexts.scores(estimate)?;
    let scales: Vec<f64> = contexts.arms().iter().map(|x| v * gram.inverse_norm(x)).collect();
    let win = arm_win_mass(&means, &scales, rule, chosen);
    let propensity = win.max(gamma).min(1.0);
    let mut decision = PolicyDecision::single(chosen);
    decision.propensity = Some(propensity);
    Ok(decision)
}

#[derive(Debug, Clone)]
pub struct Blts {
    ridge: RidgeAccumulator,
    factor: SpdFactor,
    estimate: DVector<f64>,
    v: f64,
    gamma: f64,
    rule: QmcRule,
}

impl Blts {
    pub fn new(dim: usize, lambda: f64, v: f64, gamma: f64, rule: QmcRule) -> Result<Self> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("exploration scale must be >= 0, got {v}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("BLTS threshold must lie in (0,1], got {gamma}")));
        }
        let ridge = RidgeAccumulator::new(dim, lambda)?;
        let factor = ridge.factor()?;
        Ok(Blts { ridge, factor, estimate: DVector::zeros(dim), v, gamma, rule })
    }
}

impl Policy for Blts {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Blts
    }

    fn decide(&mut self, contexts: &ContextSet, rng: &mut StreamRng) -> Result<PolicyDecision> {
        blts_decide(&self.factor, &self.estimate, contexts, self.v, self.gamma, &self.rule, rng)
    }

    fn observe(&mut self, contexts: &ContextSet, decision: &PolicyDecision, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::numeric("reward is not finite"));
        }
        let p = decision.propensity.ok_or_else(|| Error::InvalidState("BLTS decision without a propensity".into()))?;
        self.ridge.add(contexts.arm(decision.chosen), reward, ipw_weight(p, self.gamma));
        self.factor = self.ridge.factor()?;
        self.estimate = self.ridge.solve_with(&self.factor)?;
        Ok(())
    }

    fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }
}
