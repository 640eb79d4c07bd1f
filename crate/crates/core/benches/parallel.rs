use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use debias::estimator::{mc_verify_lemma, McSpec};
use debias::generator::sample_dataset_with;
use debias::harness::{default_synthetic_spec, run_experiment, ExperimentConfig, Method, Seeds, Source};
use debias::learner::finite::{erm_finite_class_with, FiniteClass};
use debias::{Parallelism, TrainConfig, Weighting};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn sampling(c: &mut Criterion) {
    let spec = default_synthetic_spec();
    let mut group = c.benchmark_group("sample_dataset_200k");
    for (name, mode) in MODES {
        group.bench_function(name, |b| b.iter(|| sample_dataset_with(&spec, 200_000, 1, mode).unwrap()));
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc_verify_C2_100");
    group.sample_size(10);
    for (name, mode) in MODES {
        let spec = McSpec { parallelism: mode, ..McSpec::default() };
        group.bench_function(name, |b| b.iter(|| mc_verify_lemma("C2", 100, &spec).unwrap()));
    }
    group.finish();
}

fn erm(c: &mut Criterion) {
    let spec = default_synthetic_spec();
    let data = sample_dataset_with(&spec, 20_000, 3, Parallelism::Sequential).unwrap();
    let mut stumps = Vec::new();
    for f in 0..spec.feature_dim {
        stumps.extend(FiniteClass::grid(f, -2.0, 2.0, 64).unwrap().hypotheses);
    }
    let class = FiniteClass::new(stumps).unwrap();
    let weighting = Weighting::uniform(spec.k);
    let mut group = c.benchmark_group("erm_192_stumps");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| erm_finite_class_with(&data, &weighting, &class, mode).unwrap())
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let mut group = c.benchmark_group("experiment_8_seeds");
    group.sample_size(10);
    for (name, mode) in MODES {
        let cfg = ExperimentConfig {
            methods: vec![Method::Reweighted, Method::Biased],
            learner: TrainConfig { epochs: 100, ..TrainConfig::default() },
            parallelism: mode,
            ..ExperimentConfig::new(Source::Synthetic { spec: default_synthetic_spec(), n: 4000 }, Seeds::Count(8))
        };
        group.bench_function(name, |b| b.iter(|| run_experiment(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, sampling, monte_carlo, erm, experiment);
criterion_main!(benches);
