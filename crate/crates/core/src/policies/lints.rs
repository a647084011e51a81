use nalgebra::DVector;

use super::{best_arm, Policy, PolicyDecision, PolicyKind};
use crate::domain::ContextSet;
use crate::error::{Error, Result};
use crate::estimators::RidgeAccumulator;
use crate::linalg::SpdFactor;
use crate::rng::StreamRng;

/// One shared draw `β̃ ~ N(β̂, v² A⁻¹)` and greedy choice on `x_iᵀβ̃`, where
/// `A = Σ x_{a_τ} x_{a_τ}ᵀ + λ I` over chosen arms.
pub fn lints_decide(
    gram: &SpdFactor,
    estimate: &DVector<f64>,
    contexts: &ContextSet,
    v: f64,
    rng: &mut StreamRng,
) -> Result<PolicyDecision> {
    if gram.dim() != contexts.dim() || estimate.len() != contexts.dim() {
        return Err(Error::invalid("LinTS state does not match the context dimension"));
    }
    let draw = if v == 0.0 { estimate.clone() } else { gram.sample_inverse(estimate, v, rng) };
    let chosen = best_arm(contexts.arms().iter().map(|x| x.dot(&draw)))?;
    Ok(PolicyDecision::single(chosen))
}

#[derive(Debug, Clone)]
pub struct LinTs {
    ridge: RidgeAccumulator,
    factor: SpdFactor,
    estimate: DVector<f64>,
    v: f64,
}

impl LinTs {
    pub fn new(dim: usize, lambda: f64, v: f64) -> Result<Self> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("exploration scale must be >= 0, got {v}")));
        }
        let ridge = RidgeAccumulator::new(dim, lambda)?;
        let factor = ridge.factor()?;
        Ok(LinTs { ridge, factor, estimate: DVector::zeros(dim), v })
    }

    pub fn gram(&self) -> &SpdFactor {
        &self.factor
    }
}

impl Policy for LinTs {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lints
    }

    fn decide(&mut self, contexts: &ContextSet, rng: &mut StreamRng) -> Result<PolicyDecision> {
        lints_decide(&self.factor, &self.estimate, contexts, self.v, rng)
    }

    fn observe(&mut self, contexts: &ContextSet, decision: &PolicyDecision, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::numeric("reward is not finite"));
        }
        self.ridge.add(contexts.arm(decision.chosen), reward, 1.0);
        self.factor = self.ridge.factor()?;
        self.estimate = self.ridge.solve_with(&self.factor)?;
        Ok(())
    }

    fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::mc_selection_prob_shared;
    use crate::rng::seeded;
    use nalgebra::DMatrix;

    #[test]
    fn zero_exploration_is_greedy() {
        let c = ContextSet::from_rows(1, &[vec![1.0], vec![-1.0]]).unwrap();
        let a = SpdFactor::new(DMatrix::identity(1, 1)).unwrap();
        let mut rng = seeded(0);
        let d = lints_decide(&a, &DVector::from_vec(vec![0.2]), &c, 0.0, &mut rng).unwrap();
        assert_eq!(d.chosen, 0);
        let d = lints_decide(&a, &DVector::from_vec(vec![-0.2]), &c, 0.0, &mut rng).unwrap();
        assert_eq!(d.chosen, 1);
    }

    #[test]
    fn choice_frequencies_match_argmax_oracle() {
        let c = ContextSet::from_rows(1, &[vec![0.6, 0.0], vec![0.0, 0.7], vec![0.4, 0.4]]).unwrap();
        let am = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let a = SpdFactor::new(am.clone()).unwrap();
        let est = DVector::from_vec(vec![0.2, 0.1]);
        let mut rng = seeded(1);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[lints_decide(&a, &est, &c, 0.8, &mut rng).unwrap().chosen] += 1;
        }
        let oracle = mc_selection_prob_shared(&c, &est, &am, 0.8, 200_000, &mut seeded(99));
        for k in 0..3 {
            assert!((counts[k] as f64 / n as f64 - oracle[k]).abs() < 0.02, "{counts:?} vs {oracle}");
        }
    }

    #[test]
    fn updates_use_chosen_pair_only() {
        let mut p = LinTs::new(2, 1.0, 0.0).unwrap();
        let c = ContextSet::from_rows(1, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let dec = PolicyDecision::single(0);
        p.observe(&c, &dec, 1.0).unwrap();
        assert!((p.estimate() - DVector::from_vec(vec![0.5, 0.0])).norm() < 1e-12);
    }
}
