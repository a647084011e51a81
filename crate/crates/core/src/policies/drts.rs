use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{best_arm, Policy, PolicyDecision, PolicyKind};
use crate::domain::{ContextSet, DrState, LambdaSchedule, RoundOutcome};
use crate::error::{Error, Result};
use crate::estimators::{dr_pseudo_rewards, RidgeAccumulator};
use crate::probcalc::{max_resamples, selection_prob_closed, selection_prob_tilde_factored, ProbConfig, QmcRule};
use crate::rng::StreamRng;

/// Source of the imputation estimate `β̆_t` used in the pseudo-rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Ridge on chosen pairs of rounds `1..t−1`, refreshed every round.
    #[default]
    Ridge,
    /// A fixed vector (e.g. the true parameter in a simulation).
    Fixed(Vec<f64>),
}

/// One DRTS decision: `π̃` once, then up to `M_t` candidate draws of `N`
/// independent `β̃_i ~ N(β̂_{t−1}, v² V_{t−1}⁻¹)` until the winner has
/// `π̃ > γ`. On exhaustion the last candidate is played.
pub fn drts_decide(
    state: &DrState,
    contexts: &ContextSet,
    v: f64,
    config: &ProbConfig,
    rule: &QmcRule,
    t: usize,
    rng: &mut StreamRng,
) -> Result<PolicyDecision> {
    if state.dim() != contexts.dim() {
        return Err(Error::invalid("DR state does not match the context dimension"));
    }
    let factor = state.v();
    let beta_hat = state.beta_hat();
    let pi_tilde = selection_prob_tilde_factored(contexts, beta_hat, factor, v, rule)?;
    let budget = max_resamples(t, config.delta, config.gamma);

    let mut candidates = Vec::new();
    let mut accepted = false;
    while candidates.len() < budget {
        let scores = contexts.arms().iter().map(|x| {
            if v == 0.0 {
                x.dot(beta_hat)
            } else {
                x.dot(&factor.sample_inverse(beta_hat, v, rng))
            }
        });
        let m = best_arm(scores)?;
        candidates.push(m);
        if pi_tilde[m] > config.gamma {
            accepted = true;
            break;
        }
    }
    let chosen = *candidates.last().expect("budget is at least one");
    let pi = selection_prob_closed(&pi_tilde, config.gamma, budget)?;
    Ok(PolicyDecision {
        chosen,
        resamples: candidates.len(),
        candidates,
        propensity: Some(pi[chosen]),
        pi_tilde: Some(pi_tilde),
        pi: Some(pi),
        exhausted: !accepted,
    })
}

#[derive(Debug, Clone)]
pub struct Drts {
    state: DrState,
    imputation: Imputation,
    ridge: RidgeAccumulator,
    beta_check: DVector<f64>,
    v: f64,
    config: ProbConfig,
    rule: QmcRule,
    last: Option<RoundOutcome>,
}

impl Drts {
    pub fn new(
        n_arms: usize,
        dim: usize,
        schedule: LambdaSchedule,
        v: f64,
        config: ProbConfig,
        imputation: Imputation,
        imputation_lambda: f64,
    ) -> Result<Self> {
        config.validate(n_arms)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("exploration scale must be >= 0, got {v}")));
        }
        let beta_check = match &imputation {
            Imputation::Ridge => DVector::zeros(dim),
            Imputation::Fixed(b) if b.len() == dim => DVector::from_vec(b.clone()),
            Imputation::Fixed(_) => return Err(Error::invalid("fixed imputation has the wrong dimension")),
        };
        Ok(Drts {
            state: DrState::new(dim, schedule)?,
            imputation,
            ridge: RidgeAccumulator::new(dim, imputation_lambda)?,
            beta_check,
            v,
            rule: QmcRule::from_config(&config)?,
            config,
            last: None,
        })
    }

    pub fn state(&self) -> &DrState {
        &self.state
    }

    pub fn beta_check(&self) -> &DVector<f64> {
        &self.beta_check
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn config(&self) -> &ProbConfig {
        &self.config
    }

    /// Outcome of the most recently observed round.
    pub fn last_outcome(&self) -> Option<&RoundOutcome> {
        self.last.as_ref()
    }
}

impl Policy for Drts {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Drts
    }

    fn decide(&mut self, contexts: &ContextSet, rng: &mut StreamRng) -> Result<PolicyDecision> {
        let t = self.state.rounds() + 1;
        drts_decide(&self.state, contexts, self.v, &self.config, &self.rule, t, rng)
    }

    fn observe(&mut self, contexts: &ContextSet, decision: &PolicyDecision, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::numeric("reward is not finite"));
        }
        let pi = decision
            .pi
            .as_ref()
            .ok_or_else(|| Error::InvalidState("DRTS decision without selection probabilities".into()))?;
        let pseudo = dr_pseudo_rewards(contexts, decision.chosen, reward, pi, &self.beta_check)?;
        self.state = self.state.absorb(contexts, &pseudo)?;
        if self.imputation == Imputation::Ridge {
            self.ridge.add(contexts.arm(decision.chosen), reward, 1.0);
            self.beta_check = self.ridge.solve()?;
        }
        self.last = Some(RoundOutcome {
            chosen: decision.chosen,
            reward,
            pi_tilde: decision.pi_tilde.clone().unwrap_or_default(),
            pi: pi.clone(),
            pseudo_rewards: pseudo,
            resamples: decision.resamples,
            resample_exhausted: decision.exhausted,
        });
        Ok(())
    }

    fn estimate(&self) -> &DVector<f64> {
        self.state.beta_hat()
    }
}
