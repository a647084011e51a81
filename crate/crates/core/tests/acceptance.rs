//! Acceptance gate. Every check prints one `PASS`/`FAIL` line with the
//! measured statistic and its pinned tolerance, then asserts.

use std::sync::OnceLock;
use std::time::Instant;

use drts::env::EnvSpec;
use drts::harness::validate::{
    closed_form_simulation_gap, closed_form_sum_deviation, dr_unbiasedness_max_z, incremental_dr_gap, quadrature_gaps,
};
use drts::harness::{run_experiment, run_sweep, ExperimentResult, Metric, RunConfig, SweepResult};
use drts::oracles::{check_candidate_saturation, check_min_eigen, log_log_slope, MinEigenCheck};
use drts::par::Execution;
use drts::probcalc::{ProbConfig, QmcPoints};
use drts::{LambdaSchedule, PolicyKind};

const SEED: u64 = 20_240_601;

fn verdict(id: &str, pass: bool, detail: String) -> bool {
    println!("[{id}] {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

#[test]
fn dr_pseudo_rewards_are_unbiased() {
    let start = Instant::now();
    let z = dr_unbiasedness_max_z(10, 20, 100_000, SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = verdict("1 dr-unbiasedness", z <= 4.0 && secs < 10.0, format!("max|z|={z:.3} (<= 4), {secs:.1}s (< 10s)"));
    assert!(ok);
}

#[test]
fn closed_form_resampling_probabilities() {
    let start = Instant::now();
    let dev = closed_form_sum_deviation(1000, SEED).unwrap();
    let gap = closed_form_simulation_gap(20, 100_000, SEED, Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let a = verdict("2a closed-form-sum", dev <= 1e-12, format!("max|sum-1|={dev:e} (<= 1e-12)"));
    let b = verdict(
        "2b closed-form-vs-simulation",
        gap <= 0.01 && secs < 60.0,
        format!("max inf-norm gap={gap:.5} (<= 0.01), {secs:.1}s (< 60s)"),
    );
    assert!(a && b);
}

#[test]
fn quadrature_matches_monte_carlo() {
    let start = Instant::now();
    let gaps = quadrature_gaps(20, &[100, 200, 400], QmcPoints::Grid, 1_000_000, SEED, Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst200 = gaps.iter().map(|g| g[1]).fold(0.0, f64::max);
    let improved = gaps.iter().filter(|g| g[2] <= g[0]).count();
    for (k, g) in gaps.iter().enumerate() {
        println!("    instance {k:2}: gap(M=100)={:.2e} gap(M=200)={:.2e} gap(M=400)={:.2e}", g[0], g[1], g[2]);
    }
    let a = verdict(
        "3a quadrature-gap-M200",
        worst200 <= 0.01 && secs < 300.0,
        format!("max gap={worst200:.5} (<= 0.01), {secs:.1}s (< 300s)"),
    );
    let b =
        verdict("3b quadrature-refinement", improved >= 16, format!("gap(400) <= gap(100) on {improved}/20 (>= 16)"));
    assert!(a && b);
}

#[test]
fn first_candidate_is_super_unsaturated() {
    let spec = EnvSpec::new(10, 20).with_seed(SEED);
    let config = ProbConfig::for_arms(10);
    let report = check_candidate_saturation(&spec, 5000, 0, config, LambdaSchedule::default()).unwrap();
    let floor = 1.0 - config.gamma - 0.02;
    let freq = report.frequency();
    let ok = verdict(
        "4 candidate-saturation",
        freq >= floor,
        format!("frequency={freq:.4} (>= 1-gamma-0.02={floor:.4}), v={:.4}", report.v),
    );
    assert!(ok);
}

#[test]
fn minimum_eigenvalue_concentrates() {
    let check = MinEigenCheck::new(EnvSpec::new(10, 20).with_seed(SEED), 0.1, 200);
    let rows = check_min_eigen(&check, Execution::Parallel).unwrap();
    let mut ok = true;
    for r in rows {
        ok &= verdict(
            &format!("5 min-eigen t={}", r.checkpoint),
            r.pass,
            format!("violation frequency={} (<= delta/t^2 + 3 sqrt(delta/reps)={:.5})", r.statistic, r.bound),
        );
    }
    assert!(ok);
}

#[test]
fn estimation_error_rate() {
    let start = Instant::now();
    let mut config = RunConfig::default();
    config.policy = PolicyKind::Drts;
    config.horizon = 5000;
    config.reps = 10;
    config.env.seed = SEED;
    let result = run_experiment(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = &result.aggregate(Metric::EstimationError).mean;
    let ts: Vec<f64> = (500..=5000).map(|t| t as f64).collect();
    let ys: Vec<f64> = (500..=5000).map(|t| err[t - 1]).collect();
    let slope = log_log_slope(&ts, &ys).unwrap();
    let ok = verdict(
        "6 error-rate-slope",
        (-0.65..=-0.35).contains(&slope) && secs < 600.0,
        format!("slope={slope:.4} (in [-0.65, -0.35]), {secs:.1}s (< 600s)"),
    );
    assert!(ok);
}

/// The desk-scale figure sweep, shared by the figure and exhaustion checks.
fn desk_sweep() -> &'static (SweepResult, f64) {
    static SWEEP: OnceLock<(SweepResult, f64)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let mut config = RunConfig::default();
        config.env.n_arms = 20;
        config.env.dim = 30;
        config.env.seed = SEED;
        config.horizon = 2000;
        config.reps = 10;
        let start = Instant::now();
        let sweep = run_sweep(&config).unwrap();
        (sweep, start.elapsed().as_secs_f64())
    })
}

fn best(sweep: &SweepResult, policy: PolicyKind) -> &ExperimentResult {
    sweep.best_for(policy).expect("policy is in the sweep")
}

#[test]
fn figure_directional_reproduction() {
    let (sweep, secs) = desk_sweep();
    let (drts, lints, blts) =
        (best(sweep, PolicyKind::Drts), best(sweep, PolicyKind::Lints), best(sweep, PolicyKind::Blts));
    for b in [drts, lints, blts] {
        println!(
            "    best {}: v={} gamma={} final regret {:.3} final error {:.4}",
            b.config.policy,
            b.resolved.v,
            b.resolved.gamma,
            b.final_regret().0,
            b.aggregate(Metric::EstimationError).mean[1999]
        );
    }
    let error = |r: &ExperimentResult| r.aggregate(Metric::EstimationError).mean.clone();
    let (e_drts, e_lints) = (error(drts), error(lints));
    let a = verdict(
        "7a final-error",
        e_drts[1999] < e_lints[1999],
        format!("DRTS error at t=2000 {:.4} < LinTS {:.4}", e_drts[1999], e_lints[1999]),
    );
    let baseline = lints.final_regret().0.min(blts.final_regret().0);
    let r_drts = drts.final_regret().0;
    let b1 = verdict(
        "7b regret",
        r_drts <= 1.1 * baseline && *secs < 1800.0,
        format!(
            "DRTS regret {r_drts:.3} <= 1.1 x best baseline {baseline:.3} = {:.3}, {secs:.0}s (< 1800s)",
            1.1 * baseline
        ),
    );
    let window_max = |e: &[f64]| e[..200].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (m_drts, m_lints) = (window_max(&e_drts), window_max(&e_lints));
    let b2 = verdict(
        "7b drts-no-spike",
        m_drts <= 2.0 * e_drts[199],
        format!("DRTS max error on [1,200] {m_drts:.4} <= 2 x error(200) = {:.4}", 2.0 * e_drts[199]),
    );
    let b3 = verdict(
        "7b lints-spike",
        m_lints >= 2.0 * e_lints[199],
        format!("LinTS max error on [1,200] {m_lints:.4} >= 2 x error(200) = {:.4}", 2.0 * e_lints[199]),
    );
    assert!(a && b1 && b2 && b3);
}

#[test]
fn resampling_rarely_exhausts() {
    let (sweep, _) = desk_sweep();
    let drts = best(sweep, PolicyKind::Drts);
    let (fraction, _) = drts.exhausted_fraction();
    let delta = drts.config.delta;
    let ok = verdict(
        "8 exhausted-fraction",
        fraction <= 1.65 * delta,
        format!("fraction={fraction:.5} (<= 1.65 delta = {:.3}), v={}", 1.65 * delta, drts.resolved.v),
    );
    assert!(ok);
}

#[test]
fn incremental_dr_update_matches_batch() {
    let start = Instant::now();
    let gap = incremental_dr_gap(100, 50, Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = verdict(
        "9 incremental-vs-batch",
        gap <= 1e-8 && secs < 30.0,
        format!("max relative difference={gap:e} (<= 1e-8), {secs:.2}s (< 30s)"),
    );
    assert!(ok);
}
