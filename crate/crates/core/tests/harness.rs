use std::fs;

use drts::harness::output::{emit_run, emit_sweep, MANIFEST, ROUNDS_CSV, SUMMARY_CSV};
use drts::harness::{run_episode, run_experiment_with, run_sweep_with, Param, RunConfig, CSV_HEADER};
use drts::par::Execution;
use drts::PolicyKind;

fn small(policy: PolicyKind) -> RunConfig {
    let mut c = RunConfig::default();
    c.policy = policy;
    c.env.n_arms = 6;
    c.env.dim = 4;
    c.env.seed = 11;
    c.seed = 5;
    c.horizon = 25;
    c.reps = 4;
    c.qmc_points = 64;
    c
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let config = small(PolicyKind::Drts);
    let result = run_experiment_with(&config, Execution::Parallel).unwrap();
    emit_run(&first, &result).unwrap();

    let reloaded = RunConfig::load(&first.join(MANIFEST)).unwrap();
    assert_eq!(reloaded, config);
    let second = dir.path().join("second");
    emit_run(&second, &run_experiment_with(&reloaded, Execution::Sequential).unwrap()).unwrap();
    for file in [ROUNDS_CSV, SUMMARY_CSV] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(second.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn replications_do_not_depend_on_order() {
    let config = small(PolicyKind::Blts);
    let all = run_experiment_with(&config, Execution::Parallel).unwrap();
    for rep in (0..config.reps).rev() {
        assert_eq!(run_episode(&config, rep).unwrap(), all.series[rep]);
    }
}

#[test]
fn sweep_outputs_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(PolicyKind::Drts);
    config.reps = 2;
    config.horizon = 10;
    config.sweep.v = vec![0.01, 0.1];
    config.sweep.gamma = vec![0.05];
    let sweep = run_sweep_with(&config, Execution::Parallel).unwrap();
    let files = emit_sweep(dir.path(), "sweep", &config, &sweep).unwrap();
    for f in &files {
        assert!(fs::metadata(f).unwrap().len() > 0);
    }
    let summary = fs::read_to_string(dir.path().join(SUMMARY_CSV)).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 3 * sweep.cells.len());
    let rounds = fs::read_to_string(dir.path().join(ROUNDS_CSV)).unwrap();
    for line in rounds.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 10);
        fields[0].parse::<usize>().unwrap();
        fields[2].parse::<f64>().unwrap();
        fields[3].parse::<f64>().unwrap();
        assert!(["lints", "blts", "drts"].contains(&fields[4]));
    }
    let manifest = RunConfig::load(&dir.path().join(MANIFEST)).unwrap();
    assert_eq!(manifest.sweep, config.sweep);
}

#[test]
fn full_scale_defaults_are_representable() {
    let text = r#"
        policy = "blts"
        T = 20000
        reps = 10
        v = 0.001
        gamma = 0.05
        lambda_mode = "algorithmic"
        lambda_base = 1.0

        [env]
        n_arms = 20
        dim = 30

        [sweep]
        v = [0.001, 0.01, 0.1, 1.0]
        gamma = [0.01, 0.05, 0.1]
    "#;
    let c = RunConfig::from_toml_str(text).unwrap();
    c.validate().unwrap();
    assert_eq!(c.horizon, 20_000);
    assert_eq!(c.v, Param::Value(0.001));
    assert_eq!(c.env.rho, 0.5);
}
