use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mfrl_core::agents::AgentConfig;
use mfrl_core::experiment::{execute, EnvConfig, ExperimentConfig, SyntheticEnvConfig};
use mfrl_core::parallel::Execution;
use mfrl_core::theory::{empirical_tail, variance_ratio, BivariateReturns, BoundedDist};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn estimator_repetitions(c: &mut Criterion) {
    let mut group = c.benchmark_group("variance_ratio");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| variance_ratio(BivariateReturns::standard(0.9), 30, 4_000, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn tail_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_tail");
    let dist = BoundedDist::Uniform { lo: -1.0, hi: 1.0 };
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| empirical_tail(dist, 64, 0.1, 20_000, 2, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, jobs) in [("sequential", 1), ("parallel", 0)] {
        let cfg = ExperimentConfig {
            seeds: (0..4).collect(),
            m: vec![2],
            jobs,
            env: EnvConfig::Synthetic(SyntheticEnvConfig { num_states: 20, num_actions: 3, ..Default::default() }),
            agent: AgentConfig { episodes: 100, eval_every: 50, eval_episodes: 20, ..Default::default() },
            ..ExperimentConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| execute(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, estimator_repetitions, tail_trials, sweep);
criterion_main!(benches);
