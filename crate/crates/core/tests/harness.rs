use std::collections::BTreeSet;

use debias::estimator::{estimate_beta, estimate_rates};
use debias::harness::report::{report_csv, CSV_HEADER};
use debias::harness::{
    default_synthetic_spec, emit_report, method_training_set, prepare_run, run_experiment, BetaSpec, ExperimentConfig,
    Method, MetricsReport, ReportFormat, Seeds, Source,
};
use debias::population::PopulationRates;
use debias::{BetaVector, Dataset, FilterMode, Parallelism, Row, TrainConfig};

fn small_config(seeds: usize) -> ExperimentConfig {
    ExperimentConfig {
        learner: TrainConfig { epochs: 100, ..TrainConfig::default() },
        master_seed: 21,
        ..ExperimentConfig::new(Source::Synthetic { spec: default_synthetic_spec(), n: 3000 }, Seeds::Count(seeds))
    }
}

fn ids(d: &Dataset) -> BTreeSet<usize> {
    d.rows().iter().map(|r| r.id).filter(|&id| id != Row::SYNTHETIC).collect()
}

#[test]
fn test_split_never_reaches_training() {
    let cfg = small_config(3);
    for seed in 0..3 {
        let run = prepare_run(&cfg, None, seed).unwrap();
        let test = ids(&run.test);
        assert_eq!(test.len(), run.test.len());
        assert!(ids(&run.train).is_disjoint(&test));
        assert!(ids(&run.holdout).is_subset(&ids(&run.train)));
        assert!(ids(&run.biased).is_subset(&ids(&run.train)));
        assert!(ids(&run.holdout).is_disjoint(&ids(&run.biased)));
        let beta_hat = estimate_beta(&estimate_rates(&run.holdout, &run.biased).unwrap()).unwrap();
        for method in Method::ALL {
            let (data, weights) = method_training_set(&cfg, &run, method, &beta_hat).unwrap();
            assert_eq!(data.len(), weights.len());
            assert!(ids(&data).is_disjoint(&test), "{method} trained on test rows");
        }
    }
}

#[test]
fn identical_config_gives_identical_bytes() {
    let cfg = small_config(3);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    let seq = run_experiment(&ExperimentConfig { parallelism: Parallelism::Sequential, ..cfg }).unwrap();
    for fmt in [ReportFormat::Json, ReportFormat::Csv] {
        let bytes = emit_report(&a, fmt).unwrap();
        assert_eq!(bytes, emit_report(&b, fmt).unwrap());
        assert_eq!(bytes, emit_report(&seq, fmt).unwrap());
    }
}

#[test]
fn report_round_trip_and_row_count() {
    let report = run_experiment(&small_config(2)).unwrap();
    let json = emit_report(&report, ReportFormat::Json).unwrap();
    let back: MetricsReport = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, report);

    let csv = report_csv(&report);
    let k = default_synthetic_spec().k;
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len() - 1, report.runs.len() * (4 + k));

    let empty = MetricsReport { runs: vec![], ..report };
    assert_eq!(report_csv(&empty).trim_end(), CSV_HEADER);
}

#[test]
fn smaller_holdout_gives_worse_estimates_on_average() {
    let spec = default_synthetic_spec();
    let betas = vec![0.4, 0.6, 0.8];
    let truth = PopulationRates::compute(&spec, &BetaVector::empirical(betas.clone()).unwrap(), FilterMode::Empirical)
        .unwrap()
        .inverse_group_retention();
    let fractions = [0.05, 0.1, 0.2, 0.4];
    let mut mean_err = Vec::new();
    for &holdout_fraction in &fractions {
        let cfg = ExperimentConfig {
            beta: BetaSpec::Fixed { betas: betas.clone(), beta0: None },
            holdout_fraction,
            ..ExperimentConfig::new(Source::Synthetic { spec: spec.clone(), n: 2000 }, Seeds::Count(200))
        };
        let mut total = 0.0;
        let mut used = 0;
        for seed in 0..200 {
            let run = prepare_run(&cfg, None, seed).unwrap();
            let Ok(est) = estimate_rates(&run.holdout, &run.biased).and_then(|r| estimate_beta(&r)) else { continue };
            total += est.inv_beta_hat.iter().zip(&truth).map(|(e, t)| (e - t).abs()).sum::<f64>();
            used += 1;
        }
        assert!(used >= 190, "too many degenerate holdouts at fraction {holdout_fraction}");
        mean_err.push(total / used as f64);
    }
    assert!(mean_err.windows(2).all(|w| w[0] > w[1]), "{mean_err:?}");
}
