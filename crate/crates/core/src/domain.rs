//! Domain types shared by every policy: per-round context sets, the DR
//! sufficient statistics, round outcomes and regret bookkeeping.
//!
//! Arms are indexed from 0 throughout the crate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax, SpdFactor};

/// Slack allowed on the unit-norm bound for rows that were rescaled in
/// floating point.
pub const NORM_SLACK: f64 = 1e-9;

/// The `N × d` contexts revealed at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    round: usize,
    arms: Vec<DVector<f64>>,
}

impl ContextSet {
    pub fn new(round: usize, arms: Vec<DVector<f64>>) -> Result<Self> {
        if round == 0 {
            return Err(Error::invalid("rounds are numbered from 1"));
        }
        if arms.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 arms, got {}", arms.len())));
        }
        let d = arms[0].len();
        if d == 0 {
            return Err(Error::invalid("context dimension must be at least 1"));
        }
        for (i, x) in arms.iter().enumerate() {
            if x.len() != d {
                return Err(Error::invalid(format!("arm {i} has dimension {}, expected {d}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("arm {i} has non-finite entries")));
            }
            let norm = x.norm();
            if norm > 1.0 + NORM_SLACK {
                return Err(Error::invalid(format!("arm {i} has norm {norm} > 1")));
            }
        }
        Ok(ContextSet { round, arms })
    }

    /// Builds from row slices; convenient in tests and configs.
    pub fn from_rows(round: usize, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(round, rows.iter().map(|r| DVector::from_vec(r.clone())).collect())
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dim(&self) -> usize {
        self.arms[0].len()
    }

    pub fn arm(&self, i: usize) -> &DVector<f64> {
        &self.arms[i]
    }

    pub fn arms(&self) -> &[DVector<f64>] {
        &self.arms
    }

    /// Rows stacked as an `N × d` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_arms(), self.dim(), |i, j| self.arms[i][j])
    }

    /// `x_iᵀ β` for every arm.
    pub fn scores(&self, beta: &DVector<f64>) -> Result<Vec<f64>> {
        if beta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "parameter has dimension {}, contexts have {}",
                beta.len(),
                self.dim()
            )));
        }
        Ok(self.arms.iter().map(|x| x.dot(beta)).collect())
    }

    /// `Σᵢ x_i x_iᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        for x in &self.arms {
            g.ger(1.0, x, x, 1.0);
        }
        g
    }
}

/// Ground truth of a simulated environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub beta: DVector<f64>,
    pub sigma: f64,
}

impl TrueModel {
    pub fn new(beta: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("noise scale must be finite and >= 0, got {sigma}")));
        }
        if beta.norm() > 1.0 + NORM_SLACK {
            return Err(Error::invalid(format!("parameter norm {} exceeds 1", beta.norm())));
        }
        Ok(TrueModel { beta, sigma })
    }
}

/// Optimal arm under `beta`, lowest index on ties.
pub fn optimal_arm(contexts: &ContextSet, beta: &DVector<f64>) -> Result<usize> {
    let scores = contexts.scores(beta)?;
    Ok(argmax(scores).expect("a context set has at least two arms"))
}

/// `max_i x_iᵀβ − x_chosenᵀβ`.
pub fn compute_regret(contexts: &ContextSet, beta: &DVector<f64>, chosen: usize) -> Result<f64> {
    if chosen >= contexts.n_arms() {
        return Err(Error::invalid(format!("arm {chosen} out of range for {} arms", contexts.n_arms())));
    }
    let scores = contexts.scores(beta)?;
    let best = scores[argmax(scores.iter().copied()).expect("non-empty")];
    Ok((best - scores[chosen]).max(0.0))
}

/// Regularisation schedule `λ_t` of the DR estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaSchedule {
    /// `λ_t = base·√t`.
    Algorithmic { base: f64 },
    /// `λ_t = 4√2·N·√(t·log(12t²/δ))`.
    Theoretical { n_arms: usize, delta: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::Algorithmic { base: 1.0 }
    }
}

impl LambdaSchedule {
    /// Value at round `t`; round 0 uses the round-1 value so that `V_0 = λ I`.
    pub fn at(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            LambdaSchedule::Algorithmic { base } => base * t.sqrt(),
            LambdaSchedule::Theoretical { n_arms, delta } => {
                4.0 * std::f64::consts::SQRT_2 * n_arms as f64 * (t * (12.0 * t * t / delta).ln()).sqrt()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaSchedule::Algorithmic { base } if !(base > 0.0 && base.is_finite()) => {
                Err(Error::invalid(format!("lambda base must be positive, got {base}")))
            }
            LambdaSchedule::Theoretical { delta, .. } if !(delta > 0.0 && delta < 1.0) => {
                Err(Error::invalid(format!("delta must lie in (0,1), got {delta}")))
            }
            LambdaSchedule::Theoretical { n_arms: 0, .. } => {
                Err(Error::invalid("theoretical schedule needs n_arms >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Sufficient statistics of the DR ridge estimator after `t` absorbed rounds.
///
/// `F_t = Σ x_i Y_i^DR`, `W_t = Σ x_i x_iᵀ`, `V_t = W_t + λ_t I` and
/// `β̂_t = V_t⁻¹ F_t`. Values are immutable snapshots; [`DrState::absorb`]
/// returns the next state.
#[derive(Debug, Clone)]
pub struct DrState {
    t: usize,
    f: DVector<f64>,
    w: DMatrix<f64>,
    schedule: LambdaSchedule,
    beta_hat: DVector<f64>,
    v: SpdFactor,
}

impl DrState {
    pub fn new(dim: usize, schedule: LambdaSchedule) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        schedule.validate()?;
        let w = DMatrix::zeros(dim, dim);
        let v = SpdFactor::new(DMatrix::identity(dim, dim) * schedule.at(0))?;
        Ok(DrState { t: 0, f: DVector::zeros(dim), w, schedule, beta_hat: DVector::zeros(dim), v })
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn schedule(&self) -> LambdaSchedule {
        self.schedule
    }

    /// `λ_t` for the current round count.
    pub fn lambda(&self) -> f64 {
        self.schedule.at(self.t)
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Factor of `V_t`.
    pub fn v(&self) -> &SpdFactor {
        &self.v
    }

    /// Folds round `t+1` into the statistics and re-solves for `β̂`.
    pub fn absorb(&self, contexts: &ContextSet, pseudo_rewards: &DVector<f64>) -> Result<DrState> {
        if contexts.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "contexts have dimension {}, state has {}",
                contexts.dim(),
                self.dim()
            )));
        }
        if pseudo_rewards.len() != contexts.n_arms() {
            return Err(Error::invalid(format!(
                "{} pseudo-rewards for {} arms",
                pseudo_rewards.len(),
                contexts.n_arms()
            )));
        }
        if let Some(i) = pseudo_rewards.iter().position(|y| !y.is_finite()) {
            return Err(Error::numeric(format!("pseudo-reward of arm {i} is not finite")));
        }
        let mut f = self.f.clone();
        let mut w = self.w.clone();
        for (x, &y) in contexts.arms().iter().zip(pseudo_rewards.iter()) {
            f.axpy(y, x, 1.0);
            w.ger(1.0, x, x, 1.0);
        }
        let t = self.t + 1;
        let lambda = self.schedule.at(t);
        let mut vm = w.clone();
        for k in 0..vm.nrows() {
            vm[(k, k)] += lambda;
        }
        let v = SpdFactor::new(vm)?;
        let beta_hat = v.solve(&f)?;
        Ok(DrState { t, f, w, schedule: self.schedule, beta_hat, v })
    }
}

/// Everything that happened in one DRTS round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub chosen: usize,
    pub reward: f64,
    pub pi_tilde: DVector<f64>,
    pub pi: DVector<f64>,
    pub pseudo_rewards: DVector<f64>,
    pub resamples: usize,
    pub resample_exhausted: bool,
}

/// Per-round metrics of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub instantaneous_regret: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub estimation_error: Vec<f64>,
    pub resamples: Vec<usize>,
    pub exhausted: Vec<bool>,
}

impl MetricsSeries {
    pub fn with_capacity(n: usize) -> Self {
        MetricsSeries {
            instantaneous_regret: Vec::with_capacity(n),
            cumulative_regret: Vec::with_capacity(n),
            estimation_error: Vec::with_capacity(n),
            resamples: Vec::with_capacity(n),
            exhausted: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.instantaneous_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instantaneous_regret.is_empty()
    }

    pub fn push(&mut self, regret: f64, estimation_error: f64, resamples: usize, exhausted: bool) {
        debug_assert!(regret >= 0.0);
        let total = self.cumulative_regret.last().copied().unwrap_or(0.0) + regret;
        self.instantaneous_regret.push(regret);
        self.cumulative_regret.push(total);
        self.estimation_error.push(estimation_error);
        self.resamples.push(resamples);
        self.exhausted.push(exhausted);
    }

    pub fn final_cumulative_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    pub fn exhausted_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.exhausted.iter().filter(|&&e| e).count() as f64 / self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn regret_examples() {
        let c = ContextSet::from_rows(1, &[vec![0.5], vec![-0.5]]).unwrap();
        let beta = dv(&[1.0]);
        assert_eq!(compute_regret(&c, &beta, 0).unwrap(), 0.0);
        assert_relative_eq!(compute_regret(&c, &beta, 1).unwrap(), 1.0);

        let same = ContextSet::from_rows(1, &vec![vec![0.3, 0.1]; 4]).unwrap();
        for i in 0..4 {
            assert_eq!(compute_regret(&same, &dv(&[0.2, -0.7]), i).unwrap(), 0.0);
        }
        assert_eq!(optimal_arm(&same, &dv(&[0.2, -0.7])).unwrap(), 0);
    }

    #[test]
    fn regret_rejects_bad_inputs() {
        let c = ContextSet::from_rows(1, &[vec![0.5], vec![-0.5]]).unwrap();
        assert!(matches!(compute_regret(&c, &dv(&[1.0, 0.0]), 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(compute_regret(&c, &dv(&[1.0]), 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn context_set_validation() {
        assert!(ContextSet::from_rows(1, &[vec![1.0]]).is_err());
        assert!(ContextSet::from_rows(1, &[vec![1.0, 0.5], vec![0.0, 0.0]]).is_err());
        assert!(ContextSet::from_rows(1, &[vec![f64::NAN], vec![0.0]]).is_err());
        assert!(ContextSet::from_rows(0, &[vec![0.1], vec![0.0]]).is_err());
        assert!(ContextSet::from_rows(1, &[vec![0.1], vec![0.0, 0.1]]).is_err());
    }

    #[test]
    fn single_round_absorb() {
        let s = DrState::new(2, LambdaSchedule::Algorithmic { base: 1.0 }).unwrap();
        let c = ContextSet::from_rows(1, &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let s1 = s.absorb(&c, &dv(&[1.0, 0.0])).unwrap();
        assert_relative_eq!(s1.beta_hat().clone(), dv(&[0.5, 0.0]), epsilon = 1e-15);
        assert_eq!(s1.rounds(), 1);
    }

    #[test]
    fn zero_contexts_only_change_lambda() {
        let s = DrState::new(2, LambdaSchedule::Algorithmic { base: 1.0 }).unwrap();
        let c = ContextSet::from_rows(1, &[vec![0.6, 0.8], vec![0.0, 0.0]]).unwrap();
        let s1 = s.absorb(&c, &dv(&[1.0, 0.0])).unwrap();
        let z = ContextSet::from_rows(2, &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let s2 = s1.absorb(&z, &dv(&[5.0, -3.0])).unwrap();
        assert_eq!(s2.f(), s1.f());
        assert_eq!(s2.w(), s1.w());
        // re-solve with the new λ
        let mut v = s1.w().clone();
        v += DMatrix::identity(2, 2) * 2f64.sqrt();
        let expect = v.try_inverse().unwrap() * s1.f();
        assert_relative_eq!(s2.beta_hat().clone(), expect, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_pseudo_reward_is_numeric_error() {
        let s = DrState::new(1, LambdaSchedule::default()).unwrap();
        let c = ContextSet::from_rows(1, &[vec![0.5], vec![0.5]]).unwrap();
        assert!(matches!(s.absorb(&c, &dv(&[f64::INFINITY, 0.0])), Err(Error::Numeric(_))));
    }

    #[test]
    fn eigen_floor_and_schedules() {
        let sched = LambdaSchedule::Algorithmic { base: 2.0 };
        let mut s = DrState::new(3, sched).unwrap();
        for t in 1..=5 {
            let c = ContextSet::from_rows(t, &[vec![0.1 * t as f64, 0.2, 0.0], vec![0.0, 0.3, 0.4]]).unwrap();
            s = s.absorb(&c, &dv(&[1.0, -1.0])).unwrap();
            assert!(min_eigenvalue(s.v().matrix()) >= s.lambda() - 1e-12);
        }
        assert_relative_eq!(s.lambda(), 2.0 * 5f64.sqrt());
        let th = LambdaSchedule::Theoretical { n_arms: 10, delta: 0.1 };
        let expect = 4.0 * 2f64.sqrt() * 10.0 * (4.0 * (12.0 * 16.0 / 0.1f64).ln()).sqrt();
        assert_relative_eq!(th.at(4), expect, max_relative = 1e-14);
        assert!(LambdaSchedule::Algorithmic { base: 0.0 }.validate().is_err());
    }

    #[test]
    fn metrics_accumulate() {
        let mut m = MetricsSeries::default();
        m.push(0.5, 1.0, 1, false);
        m.push(0.0, 0.5, 3, true);
        m.push(0.25, 0.4, 1, false);
        assert_eq!(m.cumulative_regret, vec![0.5, 0.5, 0.75]);
        assert_relative_eq!(m.exhausted_fraction(), 1.0 / 3.0);
    }
}
