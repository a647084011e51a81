use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{super_unsaturated_set, CheckpointReport};
use crate::domain::{ContextSet, LambdaSchedule, TrueModel};
use crate::env::{estimate_phi_squared, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::estimators::dr_pseudo_rewards;
use crate::linalg::min_eigenvalue;
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::policies::{Drts, Imputation, Policy};
use crate::probcalc::{exploration_v, ProbConfig};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinEigenLambda {
    /// `λ_t = 4√2·N·√(t·log(4t²/δ))`.
    Concentration,
    Zero,
}

/// Frequency with which `λ_min(Σ_τ Σ_i x xᵀ + λ_t I) < φ² N t` at checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct MinEigenCheck {
    pub spec: EnvSpec,
    pub delta: f64,
    pub checkpoints: Vec<usize>,
    pub reps: usize,
    pub lambda: MinEigenLambda,
    /// `None` estimates `φ²` from the environment with `phi_samples` draws.
    pub phi_squared: Option<f64>,
    pub phi_samples: usize,
}

impl MinEigenCheck {
    pub fn new(spec: EnvSpec, delta: f64, reps: usize) -> Self {
        MinEigenCheck {
            spec,
            delta,
            checkpoints: vec![10, 100, 1000],
            reps,
            lambda: MinEigenLambda::Concentration,
            phi_squared: None,
            phi_samples: 20_000,
        }
    }

    fn lambda_at(&self, t: usize) -> f64 {
        match self.lambda {
            MinEigenLambda::Zero => 0.0,
            MinEigenLambda::Concentration => {
                let t = t as f64;
                4.0 * std::f64::consts::SQRT_2 * self.spec.n_arms as f64 * (t * (4.0 * t * t / self.delta).ln()).sqrt()
            }
        }
    }
}

/// Rows carry the violation frequency and the allowance `δ/t² + 3√(δ/reps)`.
pub fn check_min_eigen(check: &MinEigenCheck, exec: Execution) -> Result<Vec<CheckpointReport>> {
    if check.reps < 100 {
        return Err(Error::invalid("the eigenvalue check needs at least 100 replications"));
    }
    if check.checkpoints.is_empty() || check.checkpoints.contains(&0) {
        return Err(Error::invalid("checkpoints must be positive"));
    }
    let phi2 = match check.phi_squared {
        Some(p) => p,
        None => estimate_phi_squared(&check.spec, check.phi_samples)?,
    };
    let env = Environment::new(check.spec.clone())?;
    let horizon = *check.checkpoints.iter().max().expect("non-empty");
    let n = check.spec.n_arms as f64;
    let d = check.spec.dim;
    let violations = try_map_indexed(exec, check.reps, |rep| {
        let mut rng = rng::stream(check.spec.seed, rep as u64, Purpose::Contexts);
        let mut w = DMatrix::<f64>::zeros(d, d);
        let mut flags = Vec::with_capacity(check.checkpoints.len());
        for t in 1..=horizon {
            w += env.gen_contexts(t, &mut rng)?.gram();
            if check.checkpoints.contains(&t) {
                let mut v = w.clone();
                let lambda = check.lambda_at(t);
                for k in 0..d {
                    v[(k, k)] += lambda;
                }
                flags.push((t, min_eigenvalue(&v) < phi2 * n * t as f64));
            }
        }
        Ok(flags)
    })?;
    Ok(check
        .checkpoints
        .iter()
        .map(|&t| {
            let count = violations.iter().filter(|flags| flags.iter().any(|&(c, bad)| c == t && bad)).count();
            let freq = count as f64 / check.reps as f64;
            let bound = check.delta / (t * t) as f64 + 3.0 * (check.delta / check.reps as f64).sqrt();
            CheckpointReport { checkpoint: t, statistic: freq, bound, pass: freq <= bound }
        })
        .collect())
}

/// How the adapted unit vectors `X(τ)` are chosen from the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionProcess {
    /// Always `e₁`.
    Fixed,
    /// `e_{τ mod d}`.
    Cycling,
    /// Along the running sum `S_{τ−1}`.
    AlignedWithSum,
    /// Orthogonal to the running sum, rotating through the complement.
    OrthogonalToSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleCheck {
    pub sigma: f64,
    pub dim: usize,
    pub delta: f64,
    pub checkpoints: Vec<usize>,
    pub reps: usize,
    pub process: DirectionProcess,
    pub seed: u64,
}

impl MartingaleCheck {
    pub fn new(sigma: f64, reps: usize, process: DirectionProcess, seed: u64) -> Self {
        MartingaleCheck { sigma, dim: 20, delta: 0.1, checkpoints: vec![100, 1000, 10_000], reps, process, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    /// Per checkpoint: statistic is the normalised `1 − δ/t²` quantile.
    pub rows: Vec<CheckpointReport>,
    /// Largest over smallest normalised quantile.
    pub spread: f64,
    pub pass: bool,
}

pub const MARTINGALE_SPREAD_BOUND: f64 = 3.0;

fn next_direction(process: DirectionProcess, tau: usize, sum: &DVector<f64>) -> DVector<f64> {
    let d = sum.len();
    let basis = |k: usize| {
        let mut e = DVector::zeros(d);
        e[k % d] = 1.0;
        e
    };
    let norm = sum.norm();
    match process {
        DirectionProcess::Fixed => basis(0),
        DirectionProcess::Cycling => basis(tau),
        DirectionProcess::AlignedWithSum if norm > 0.0 => sum / norm,
        DirectionProcess::AlignedWithSum => basis(0),
        DirectionProcess::OrthogonalToSum => {
            let e = basis(tau);
            if norm == 0.0 || d == 1 {
                return e;
            }
            let u = sum / norm;
            let r = &e - &u * u.dot(&e);
            let rn = r.norm();
            if rn > 1e-12 {
                r / rn
            } else {
                basis(tau + 1)
            }
        }
    }
}

/// `‖Σ_{τ≤t} η(τ) X(τ)‖` for every replication, grouped by checkpoint.
pub fn martingale_norms(check: &MartingaleCheck, exec: Execution) -> Result<Vec<Vec<f64>>> {
    if check.dim == 0 || check.checkpoints.is_empty() {
        return Err(Error::invalid("martingale check needs a dimension and checkpoints"));
    }
    let horizon = *check.checkpoints.iter().max().expect("non-empty");
    let per_rep = map_indexed(exec, check.reps, |rep| {
        let mut rng = rng::stream(check.seed, rep as u64, Purpose::Oracle);
        let mut sum = DVector::<f64>::zeros(check.dim);
        let mut out = Vec::with_capacity(check.checkpoints.len());
        for tau in 1..=horizon {
            let x = next_direction(check.process, tau, &sum);
            let eta: f64 = check.sigma * rng.sample::<f64, _>(StandardNormal);
            sum.axpy(eta, &x, 1.0);
            if check.checkpoints.contains(&tau) {
                out.push(sum.norm());
            }
        }
        out
    });
    Ok((0..check.checkpoints.len()).map(|k| per_rep.iter().map(|r| r[k]).collect()).collect())
}

fn upper_quantile(mut values: Vec<f64>, level: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite norms"));
    let rank = ((level * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// Normalised quantiles `q_{1−δ/t²} / (σ√(t·log(4t²/δ)))` must stay within a
/// constant factor of each other across checkpoints.
pub fn check_martingale_norm(check: &MartingaleCheck, exec: Execution) -> Result<MartingaleReport> {
    if check.reps < 100 {
        return Err(Error::invalid("the martingale check needs at least 100 replications"));
    }
    let norms = martingale_norms(check, exec)?;
    let mut rows = Vec::new();
    for (&t, samples) in check.checkpoints.iter().zip(norms) {
        let tf = t as f64;
        let level = 1.0 - check.delta / (tf * tf);
        let q = upper_quantile(samples, level);
        let scale = check.sigma * (tf * (4.0 * tf * tf / check.delta).ln()).sqrt();
        let ratio = if scale > 0.0 { q / scale } else { 0.0 };
        rows.push(CheckpointReport { checkpoint: t, statistic: ratio, bound: f64::NAN, pass: true });
    }
    let max = rows.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.statistic).fold(f64::INFINITY, f64::min);
    let spread = if max == 0.0 { 1.0 } else { max / min };
    let pass = spread <= MARTINGALE_SPREAD_BOUND;
    for r in &mut rows {
        r.bound = MARTINGALE_SPREAD_BOUND;
        r.pass = pass;
    }
    Ok(MartingaleReport { rows, spread, pass })
}

/// Per-arm z-scores `(mean Y_i^DR − x_iᵀβ) / SE` when arms are drawn from `pi`.
pub fn check_dr_unbiasedness<R: Rng + ?Sized>(
    contexts: &ContextSet,
    model: &TrueModel,
    pi: &DVector<f64>,
    beta_check: &DVector<f64>,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dr_unbiasedness_with_sampler(contexts, model, pi, pi, beta_check, n_samples, rng)
}

/// As [`check_dr_unbiasedness`], with the arm sampler decoupled from the
/// probabilities used in the pseudo-rewards (for negative controls).
pub fn check_dr_unbiasedness_with_sampler<R: Rng + ?Sized>(
    contexts: &ContextSet,
    model: &TrueModel,
    sampler: &DVector<f64>,
    weights: &DVector<f64>,
    beta_check: &DVector<f64>,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = contexts.n_arms();
    if sampler.len() != n || weights.len() != n {
        return Err(Error::invalid("probability vectors must have one entry per arm"));
    }
    if (sampler.sum() - 1.0).abs() > 1e-9 || sampler.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid("sampler must be a probability distribution"));
    }
    let truth = contexts.scores(&model.beta)?;
    let cumulative: Vec<f64> = sampler
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..n_samples {
        let u: f64 = rng.random::<f64>() * cumulative[n - 1];
        let arm = cumulative.iter().position(|&c| u < c).unwrap_or(n - 1);
        let z: f64 = rng.sample(StandardNormal);
        let reward = truth[arm] + model.sigma * z;
        let y = dr_pseudo_rewards(contexts, arm, reward, weights, beta_check)?;
        for i in 0..n {
            let dev = y[i] - truth[i];
            sum[i] += dev;
            sum_sq[i] += dev * dev;
        }
    }
    let m = n_samples as f64;
    Ok((0..n)
        .map(|i| {
            let mean = sum[i] / m;
            let var = (sum_sq[i] / m - mean * mean).max(0.0) * m / (m - 1.0);
            let se = (var / m).sqrt();
            if se > 0.0 {
                mean / se
            } else if mean.abs() < 1e-12 {
                0.0
            } else {
                mean.signum() * f64::INFINITY
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationReport {
    pub rounds: usize,
    pub first_candidate_hits: usize,
    pub candidates: usize,
    pub candidate_hits: usize,
    pub v: f64,
    pub gamma: f64,
}

impl SaturationReport {
    /// Fraction of rounds whose first candidate is super-unsaturated.
    pub fn frequency(&self) -> f64 {
        self.first_candidate_hits as f64 / self.rounds as f64
    }

    pub fn all_candidate_frequency(&self) -> f64 {
        self.candidate_hits as f64 / self.candidates as f64
    }
}

/// Runs DRTS with `v` from [`exploration_v`] and counts how often the
/// candidate arm lies in the super-unsaturated set of its round.
pub fn check_candidate_saturation(
    spec: &EnvSpec,
    rounds: usize,
    replication: u64,
    config: ProbConfig,
    schedule: LambdaSchedule,
) -> Result<SaturationReport> {
    let env = Environment::new(spec.clone())?;
    let n = spec.n_arms;
    let v = exploration_v(n, config.gamma)?;
    let mut ctx_rng = rng::stream(spec.seed, replication, Purpose::Contexts);
    let mut noise_rng = rng::stream(spec.seed, replication, Purpose::Noise);
    let mut policy_rng = rng::stream(spec.seed, replication, Purpose::Policy);
    let model = env.true_model(&mut rng::stream(spec.seed, replication, Purpose::Beta))?;
    let mut drts = Drts::new(n, spec.dim, schedule, v, config, Imputation::Ridge, 1.0)?;
    let mut report =
        SaturationReport { rounds, first_candidate_hits: 0, candidates: 0, candidate_hits: 0, v, gamma: config.gamma };
    for t in 1..=rounds {
        let contexts = env.gen_contexts(t, &mut ctx_rng)?;
        let noise: Vec<f64> = (0..n).map(|_| noise_rng.sample::<f64, _>(StandardNormal)).collect();
        let set = super_unsaturated_set(&contexts, &model.beta, drts.state().beta_hat(), drts.state().v().matrix())?;
        let decision = drts.decide(&contexts, &mut policy_rng)?;
        if set.contains(&decision.candidates[0]) {
            report.first_candidate_hits += 1;
        }
        report.candidates += decision.candidates.len();
        report.candidate_hits += decision.candidates.iter().filter(|m| set.contains(m)).count();
        let reward = contexts.arm(decision.chosen).dot(&model.beta) + model.sigma * noise[decision.chosen];
        drts.observe(&contexts, &decision, reward)?;
    }
    Ok(report)
}

/// Least-squares slope of `log y` against `log t`.
pub fn log_log_slope(ts: &[f64], ys: &[f64]) -> Result<f64> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(Error::invalid("need at least two matching points"));
    }
    if ts.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ContextModel;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn isotropic_fixed_contexts_never_violate() {
        let mut spec = EnvSpec::new(3, 3);
        spec.contexts =
            ContextModel::Fixed { rows: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]] };
        let mut check = MinEigenCheck::new(spec, 0.1, 100);
        check.phi_samples = 1000;
        let rows = check_min_eigen(&check, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.statistic == 0.0 && r.pass));
    }

    #[test]
    fn rank_one_without_ridge_always_violates() {
        let mut spec = EnvSpec::new(3, 2);
        spec.contexts = ContextModel::Fixed { rows: vec![vec![1.0, 0.0]; 3] };
        let mut check = MinEigenCheck::new(spec, 0.1, 100);
        check.lambda = MinEigenLambda::Zero;
        check.phi_squared = Some(0.1);
        check.checkpoints = vec![10, 50];
        let rows = check_min_eigen(&check, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.statistic == 1.0 && !r.pass));
    }

    #[test]
    fn zero_noise_martingale_is_zero() {
        let mut check = MartingaleCheck::new(0.0, 100, DirectionProcess::Cycling, 1);
        check.checkpoints = vec![10, 100];
        let norms = martingale_norms(&check, Execution::Sequential).unwrap();
        assert!(norms.iter().flatten().all(|&x| x == 0.0));
        assert!(check_martingale_norm(&check, Execution::Sequential).unwrap().pass);
    }

    #[test]
    fn fixed_direction_matches_gaussian_quantile() {
        // |Σ η| / (σ√t) is |N(0,1)|: its 0.9 quantile is Φ⁻¹(0.95) = 1.6449
        let mut check = MartingaleCheck::new(2.0, 4000, DirectionProcess::Fixed, 2);
        check.checkpoints = vec![50];
        let norms = martingale_norms(&check, Execution::Parallel).unwrap();
        let scaled: Vec<f64> = norms[0].iter().map(|x| x / (2.0 * 50f64.sqrt())).collect();
        let q = upper_quantile(scaled, 0.9);
        assert!((q - 1.6449).abs() < 0.08, "{q}");
    }

    #[test]
    fn adapted_directions_stay_bounded() {
        for process in [DirectionProcess::AlignedWithSum, DirectionProcess::OrthogonalToSum, DirectionProcess::Cycling]
        {
            let mut check = MartingaleCheck::new(1.0, 200, process, 3);
            check.checkpoints = vec![100, 1000];
            let r = check_martingale_norm(&check, Execution::Parallel).unwrap();
            assert!(r.pass, "{process:?}: {}", r.spread);
        }
    }

    #[test]
    fn orthogonal_process_is_unit_and_orthogonal() {
        let sum = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        for tau in 0..6 {
            let x = next_direction(DirectionProcess::OrthogonalToSum, tau, &sum);
            assert_relative_eq!(x.norm(), 1.0, epsilon = 1e-12);
            assert!(x.dot(&sum).abs() < 1e-12);
        }
    }

    fn unbiasedness_fixture() -> (ContextSet, TrueModel, DVector<f64>) {
        let c = ContextSet::from_rows(1, &[vec![0.5, 0.1], vec![-0.2, 0.6], vec![0.3, -0.3]]).unwrap();
        let model = TrueModel::new(DVector::from_vec(vec![0.4, -0.3]), 1.0).unwrap();
        (c, model, DVector::from_vec(vec![0.5, 0.3, 0.2]))
    }

    #[test]
    fn dr_identity_holds_with_correct_imputation() {
        let (c, model, pi) = unbiasedness_fixture();
        let z = check_dr_unbiasedness(&c, &model, &pi, &model.beta.clone(), 100_000, &mut seeded(6)).unwrap();
        assert!(z.iter().all(|z| z.abs() <= 4.0), "{z:?}");
    }

    #[test]
    fn dr_identity_holds_with_wrong_imputation() {
        let (c, model, pi) = unbiasedness_fixture();
        let z = check_dr_unbiasedness(&c, &model, &pi, &DVector::zeros(2), 100_000, &mut seeded(7)).unwrap();
        assert!(z.iter().all(|z| z.abs() <= 4.0), "{z:?}");
    }

    #[test]
    fn mismatched_probabilities_are_detected() {
        let (c, model, pi) = unbiasedness_fixture();
        let wrong = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let z =
            check_dr_unbiasedness_with_sampler(&c, &model, &pi, &wrong, &DVector::zeros(2), 100_000, &mut seeded(8))
                .unwrap();
        assert!(z.iter().any(|z| z.abs() > 4.0), "{z:?}");
    }

    #[test]
    fn slope_of_power_law() {
        let ts: Vec<f64> = (1..=20).map(|k| 100.0 * k as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-0.5)).collect();
        assert_relative_eq!(log_log_slope(&ts, &ys).unwrap(), -0.5, epsilon = 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
    }
}
