use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use drts::harness::validate::random_selection_instance;
use drts::harness::{run_experiment_with, RunConfig};
use drts::oracles::mc_selection_prob_with;
use drts::par::Execution;
use drts::rng::seeded;
use drts::PolicyKind;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn replications(c: &mut Criterion) {
    let mut config = RunConfig::default();
    config.policy = PolicyKind::Drts;
    config.horizon = 100;
    config.reps = 8;
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(run_experiment_with(&config, exec).unwrap()))
        });
    }
    group.finish();
}

fn monte_carlo_oracle(c: &mut Criterion) {
    let inst = random_selection_instance(10, 20, 1, 0).unwrap();
    let mut group = c.benchmark_group("mc_selection_prob");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                black_box(mc_selection_prob_with(
                    exec,
                    &inst.contexts,
                    &inst.beta_hat,
                    &inst.v_matrix,
                    inst.v,
                    100_000,
                    &mut seeded(3),
                ))
            })
        });
    }
    group.finish();
}

criterion_group!(benches, replications, monte_carlo_oracle);
criterion_main!(benches);
