use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{ContextSet, DrState, LambdaSchedule, TrueModel};
use crate::env::{ContextModel, EnvSpec, Environment};
use crate::error::Result;
use crate::estimators::{dr_fit, dr_pseudo_rewards};
use crate::oracles::{
    check_candidate_saturation, check_dr_unbiasedness, check_martingale_norm, check_min_eigen, mc_selection_prob_with,
    simulate_stopping_process, write_report_csv, CheckpointReport, DirectionProcess, MartingaleCheck, MinEigenCheck,
};
use crate::par::{try_map_indexed, Execution};
use crate::probcalc::{exploration_v, selection_prob_closed, selection_prob_tilde, ProbConfig, QmcPoints};
use crate::rng::{self, Purpose};

pub const VALIDATION_CSV: &str = "validation.csv";

/// Normalised `u_i ∈ [floor, 1)` weights: a random point of the simplex with
/// every entry bounded away from zero.
pub fn random_simplex<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> DVector<f64> {
    let u = DVector::from_fn(n, |_, _| floor + (1.0 - floor) * rng.random::<f64>());
    let total = u.sum();
    u / total
}

/// A selection-probability problem as DRTS meets it after a few rounds.
#[derive(Debug, Clone)]
pub struct SelectionInstance {
    pub contexts: ContextSet,
    pub beta_hat: DVector<f64>,
    pub v_matrix: DMatrix<f64>,
    pub v: f64,
}

/// Contexts from the correlated-Gaussian environment, `V = √t·I + Σ` of the
/// gram matrices of `t ∈ [1, 50]` earlier rounds, `β̂` drawn like `β`, and
/// `v` from the exploration-scale formula.
pub fn random_selection_instance(n: usize, d: usize, seed: u64, index: u64) -> Result<SelectionInstance> {
    let env = Environment::new(EnvSpec::new(n, d).with_seed(seed))?;
    let mut rng = rng::stream(seed, index, Purpose::Oracle);
    let t = rng.random_range(1..=50usize);
    let mut v_matrix = DMatrix::identity(d, d) * (t as f64).sqrt();
    for round in 1..=t {
        v_matrix += env.gen_contexts(round, &mut rng)?.gram();
    }
    let contexts = env.gen_contexts(t + 1, &mut rng)?;
    let beta_hat = env.true_model(&mut rng)?.beta;
    let v = exploration_v(n, 1.0 / (n as f64 + 1.0))?;
    Ok(SelectionInstance { contexts, beta_hat, v_matrix, v })
}

/// Largest `|z|` of the DR pseudo-rewards with `β̆ = 0` and a random `π`.
pub fn dr_unbiasedness_max_z(n: usize, d: usize, samples: usize, seed: u64) -> Result<f64> {
    let env = Environment::new(EnvSpec::new(n, d).with_seed(seed))?;
    let mut rng = rng::stream(seed, 0, Purpose::Oracle);
    let contexts = env.gen_contexts(1, &mut rng)?;
    let model: TrueModel = env.true_model(&mut rng)?;
    let pi = random_simplex(n, 0.2, &mut rng);
    let z = check_dr_unbiasedness(&contexts, &model, &pi, &DVector::zeros(d), samples, &mut rng)?;
    Ok(z.iter().fold(0.0, |m, z| m.max(z.abs())))
}

/// A random `(π̃, γ, M_t)` with `N ∈ [2, 10]`, `γ ∈ [1/(N+1), 1/N)` and
/// `M_t ∈ [1, 100]`.
pub fn random_triple<R: Rng + ?Sized>(rng: &mut R) -> (DVector<f64>, f64, usize) {
    let n = rng.random_range(2..=10usize);
    let pi = random_simplex(n, 0.0, rng);
    let (lo, hi) = (1.0 / (n as f64 + 1.0), 1.0 / n as f64);
    let gamma = lo + (hi - lo) * rng.random::<f64>();
    (pi, gamma, rng.random_range(1..=100usize))
}

/// Largest `|Σ_i π_i − 1|` of the closed form over random triples.
pub fn closed_form_sum_deviation(triples: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::stream(seed, 1, Purpose::Oracle);
    let mut worst = 0.0f64;
    for _ in 0..triples {
        let (pi, gamma, m) = random_triple(&mut rng);
        worst = worst.max((selection_prob_closed(&pi, gamma, m)?.sum() - 1.0).abs());
    }
    Ok(worst)
}

/// Largest `‖π_closed − π_simulated‖_∞` over random triples.
pub fn closed_form_simulation_gap(triples: usize, trials: usize, seed: u64, exec: Execution) -> Result<f64> {
    let gaps = try_map_indexed(exec, triples, |k| {
        let mut rng = rng::stream(seed, 1000 + k as u64, Purpose::Oracle);
        let (pi, gamma, m) = random_triple(&mut rng);
        let closed = selection_prob_closed(&pi, gamma, m)?;
        let simulated = simulate_stopping_process(&pi, gamma, m, trials, &mut rng);
        Ok((closed - simulated).amax())
    })?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

/// For every instance, `‖π̃_M − π̂_MC‖_∞` at each quadrature size.
pub fn quadrature_gaps(
    instances: usize,
    points: &[usize],
    kind: QmcPoints,
    mc_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let (n, d) = (10, 20);
    (0..instances)
        .map(|k| {
            let inst = random_selection_instance(n, d, seed, k as u64)?;
            let mut rng = rng::stream(seed, 10_000 + k as u64, Purpose::Oracle);
            let mc = mc_selection_prob_with(
                exec,
                &inst.contexts,
                &inst.beta_hat,
                &inst.v_matrix,
                inst.v,
                mc_samples,
                &mut rng,
            );
            points
                .iter()
                .map(|&m| {
                    let config = ProbConfig { qmc_points: m, points: kind, ..ProbConfig::for_arms(n) };
                    let tilde = selection_prob_tilde(&inst.contexts, &inst.beta_hat, &inst.v_matrix, inst.v, &config)?;
                    Ok((tilde - &mc).amax())
                })
                .collect()
        })
        .collect()
}

/// Largest relative difference between the incrementally updated DR
/// estimate and a batch refit on the pooled pseudo-rewards.
pub fn incremental_dr_gap(seeds: usize, rounds: usize, exec: Execution) -> Result<f64> {
    let (n, d) = (4, 5);
    let gaps = try_map_indexed(exec, seeds, |seed| {
        let mut spec = EnvSpec::new(n, d).with_seed(seed as u64);
        spec.contexts = ContextModel::UnitSphere;
        let env = Environment::new(spec)?;
        let mut rng = rng::stream(seed as u64, 0, Purpose::Oracle);
        let model = env.true_model(&mut rng)?;
        let schedule = LambdaSchedule::default();
        let mut state = DrState::new(d, schedule)?;
        let mut pooled = Vec::with_capacity(rounds);
        let mut worst = 0.0f64;
        for t in 1..=rounds {
            let contexts = env.gen_contexts(t, &mut rng)?;
            let pi = random_simplex(n, 0.1, &mut rng);
            let chosen = rng.random_range(0..n);
            let reward = contexts.arm(chosen).dot(&model.beta) + rng.sample::<f64, _>(StandardNormal);
            let beta_check = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
            let pseudo = dr_pseudo_rewards(&contexts, chosen, reward, &pi, &beta_check)?;
            state = state.absorb(&contexts, &pseudo)?;
            pooled.push((contexts, pseudo));
            let batch = dr_fit(&pooled, d, schedule.at(t))?;
            worst = worst.max((state.beta_hat() - &batch).norm() / batch.norm().max(1e-300));
        }
        Ok(worst)
    })?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

fn row(checkpoint: usize, statistic: f64, bound: f64) -> CheckpointReport {
    CheckpointReport { checkpoint, statistic, bound, pass: statistic <= bound }
}

fn row_at_least(checkpoint: usize, statistic: f64, floor: f64) -> CheckpointReport {
    CheckpointReport { checkpoint, statistic, bound: floor, pass: statistic >= floor }
}

/// The oracle suite at a scale that finishes in well under a minute.
pub fn run_validation(seed: u64, exec: Execution) -> Result<Vec<(String, CheckpointReport)>> {
    let mut out: Vec<(String, CheckpointReport)> = Vec::new();
    let mut push = |name: &str, r: CheckpointReport| out.push((name.to_string(), r));

    push("dr_unbiasedness_max_abs_z", row(0, dr_unbiasedness_max_z(10, 20, 100_000, seed)?, 4.0));
    push("closed_form_sum_deviation", row(0, closed_form_sum_deviation(1000, seed)?, 1e-12));
    push("closed_form_vs_simulation", row(0, closed_form_simulation_gap(5, 100_000, seed, exec)?, 0.01));

    let gaps = quadrature_gaps(5, &[200], QmcPoints::Grid, 200_000, seed, exec)?;
    let worst = gaps.iter().map(|g| g[0]).fold(0.0, f64::max);
    push("quadrature_vs_monte_carlo", row(200, worst, 0.01));

    let mut eig = MinEigenCheck::new(EnvSpec::new(10, 20).with_seed(seed), 0.1, 200);
    eig.phi_samples = 20_000;
    for r in check_min_eigen(&eig, exec)? {
        push("min_eigen_violation_frequency", r);
    }

    for (k, process) in [DirectionProcess::Fixed, DirectionProcess::AlignedWithSum, DirectionProcess::OrthogonalToSum]
        .into_iter()
        .enumerate()
    {
        let check = MartingaleCheck::new(1.0, 200, process, seed + k as u64);
        let report = check_martingale_norm(&check, exec)?;
        push("martingale_quantile_spread", row(k, report.spread, report.rows[0].bound));
    }

    let spec = EnvSpec::new(10, 20).with_seed(seed);
    let config = ProbConfig::for_arms(10);
    let sat = check_candidate_saturation(&spec, 1000, 0, config, LambdaSchedule::default())?;
    let floor = 1.0 - config.gamma - 0.02;
    push("candidate_saturation_frequency", row_at_least(1000, sat.frequency(), floor));

    push("incremental_dr_relative_gap", row(50, incremental_dr_gap(20, 50, exec)?, 1e-8));
    Ok(out)
}

pub fn write_validation(dir: &Path, rows: &[(String, CheckpointReport)]) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let path = dir.join(VALIDATION_CSV);
    write_report_csv(&path, rows)?;
    Ok(path)
}
