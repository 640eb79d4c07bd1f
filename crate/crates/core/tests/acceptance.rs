//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use debias::bias_filter::{keep_probability, solve_beta0, BetaVector, FilterMode};
use debias::data::{Dataset, GroupMask, Row};
use debias::estimator::{estimate_beta, mc_verify_lemma, McSpec, RateEstimates};
use debias::generator::{sample_dataset_with, solve_p0, FeatureModel, PopulationSpec};
use debias::harness::{default_synthetic_spec, run_experiment, BetaSpec, ExperimentConfig, Method, Seeds, Source};
use debias::learner::{weighted_gradient, weighted_objective, LinearModel};
use debias::population::PopulationRates;
use debias::reweight::{weight, Weighting};
use debias::stats::{chi2_2x2, pairwise_chi2, Condition};
use debias::{Parallelism, TrainConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn spec(gamma: Vec<f64>, p: Vec<f64>) -> PopulationSpec {
    PopulationSpec {
        k: gamma.len(),
        gamma,
        p_groups: p,
        feature_dim: 1,
        feature_model: FeatureModel::symmetric(1, 2.0),
    }
}

/// Random admissible population with `k` groups.
fn random_spec(r: &mut ChaCha8Rng, k: usize) -> PopulationSpec {
    loop {
        let s = spec((0..k).map(|_| r.random_range(0.05..0.95)).collect(), (0..k).map(|_| r.random_range(0.05..0.95)).collect());
        if s.validate().is_ok() {
            return s;
        }
    }
}

// 1. The odds-ratio inverse applied to exact rates recovers the inverse retention.
fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    // single group: the realized retention is the parameter itself
    for _ in 0..100 {
        let p: f64 = r.random_range(0.01..0.99);
        let beta: f64 = r.random_range(0.01..1.0);
        let pbeta = p * beta / (p * beta + 1.0 - p);
        let est = estimate_beta(&RateEstimates {
            p0_hat: p,
            p_hat: vec![p],
            pbeta0_hat: pbeta,
            pbeta_hat: vec![pbeta],
            m: 1,
            m_i: vec![1],
            m_beta: 1,
            m_beta_i: vec![1],
        })
        .unwrap();
        worst = worst.max((est.inv_beta_hat[0] - 1.0 / beta).abs());
    }
    // overlapping groups: exact enumerated rates against exact group retention
    for _ in 0..100 {
        let k = r.random_range(2..=4);
        let s = random_spec(&mut r, k);
        let betas: Vec<f64> = (0..k).map(|_| r.random_range(0.1..1.0)).collect();
        let g_pos = s.positive_membership_rates(s.p0().unwrap());
        let Ok(beta) = BetaVector::theoretical(&g_pos, betas) else { continue };
        let Ok(rates) = PopulationRates::compute(&s, &beta, FilterMode::Theoretical) else { continue };
        let est = estimate_beta(&RateEstimates {
            p0_hat: rates.p0,
            p_hat: rates.p_groups.clone(),
            pbeta0_hat: rates.pbeta0,
            pbeta_hat: rates.pbeta_groups.clone(),
            m: 1,
            m_i: vec![1; k],
            m_beta: 1,
            m_beta_i: vec![1; k],
        })
        .unwrap();
        for (e, t) in est.inv_beta_hat.iter().zip(rates.inverse_group_retention()) {
            worst = worst.max((e - t).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max abs error {worst:.3e} (limit 1e-12)"))
}

fn product_residual(weights: &[f64], rates: &[f64], r0: f64) -> f64 {
    (1.0 - weights.iter().zip(rates).map(|(w, p)| 1.0 - w + w * p / r0).product::<f64>()).abs()
}

// 2. Fixed-point solvers.
fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let (mut worst_p0, mut worst_b0) = (0.0f64, 0.0f64);
    let mut solved = 0;
    while solved < 1000 {
        let k = r.random_range(1..=5);
        let gamma: Vec<f64> = (0..k).map(|_| r.random_range(0.01..0.99)).collect();
        let p: Vec<f64> = (0..k).map(|_| r.random_range(0.01..0.99)).collect();
        let Ok(p0) = solve_p0(&gamma, &p) else { continue };
        worst_p0 = worst_p0.max(product_residual(&gamma, &p, p0));
        let g: Vec<f64> = (0..k).map(|_| r.random_range(0.01..0.99)).collect();
        let b: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0)).collect();
        let b0 = solve_beta0(&g, &b).unwrap();
        worst_b0 = worst_b0.max(product_residual(&g, &b, b0));
        solved += 1;
    }
    // k = 2: (1 - g1 + g1 b1 u)(1 - g2 + g2 b2 u) = 1 is a quadratic in u = 1/beta0
    let quad = |g: [f64; 2], b: [f64; 2]| {
        let (a1, c1, a2, c2) = (1.0 - g[0], g[0] * b[0], 1.0 - g[1], g[1] * b[1]);
        let (qa, qb, qc) = (c1 * c2, a1 * c2 + a2 * c1, a1 * a2 - 1.0);
        let u = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        1.0 / u
    };
    let mut worst_quad = 0.0f64;
    for _ in 0..200 {
        let g = [r.random_range(0.01..0.99), r.random_range(0.01..0.99)];
        let b = [r.random_range(0.01..1.0), r.random_range(0.01..1.0)];
        worst_quad = worst_quad.max((solve_beta0(&g, &b).unwrap() - quad(g, b)).abs());
    }
    // 0.1 u^2 + 0.325 u - 0.75 = 0; the printed value 0.64125 is truncated
    let example = solve_beta0(&[0.5, 0.5], &[0.5, 0.8]).unwrap();
    let oracle = 0.2 / (-0.325 + (0.325f64 * 0.325 + 0.3).sqrt());
    let ok = worst_p0 <= 1e-10
        && worst_b0 <= 1e-10
        && worst_quad <= 1e-9
        && (example - oracle).abs() <= 1e-9
        && (example - 0.64125).abs() < 1e-5;
    outcome(
        ok,
        format!(
            "residual p0 {worst_p0:.2e}, beta0 {worst_b0:.2e}; quadratic gap {worst_quad:.2e}; beta0(0.5,0.5;0.5,0.8) = {example:.6}"
        ),
    )
}

// 3. Exact enumeration on finite supports.
fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let (mut worst_pmf, mut worst_loss) = (0.0f64, 0.0f64);
    for trial in 0..10 {
        let k = 1 + trial % 2;
        let s = random_spec(&mut r, k);
        let p0 = s.p0().unwrap();
        let betas: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
        let beta = BetaVector::theoretical(&s.positive_membership_rates(p0), betas).unwrap();
        // support: every (mask, label) cell split over 4 feature points with label-dependent mass
        let points_per_cell = 4;
        let q: [Vec<f64>; 2] = std::array::from_fn(|_| {
            let raw: Vec<f64> = (0..points_per_cell).map(|_| r.random_range(0.1..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        });
        let mut support = Vec::new(); // (row, p_D)
        for mask in GroupMask::all(k) {
            let pm = s.mask_probability(mask);
            let py = s.label_probability(p0, mask);
            for label in [false, true] {
                let pl = if label { py } else { 1.0 - py };
                for (j, qj) in q[label as usize].iter().enumerate() {
                    let mut row = Row::new(vec![j as f64], mask, label);
                    row.id = support.len();
                    support.push((row, pm * pl * qj));
                }
            }
        }
        assert!(support.len() <= 32);
        let keep = |row: &Row| if row.label { keep_probability(row.mask, &beta, FilterMode::Theoretical).unwrap() } else { 1.0 };
        let kept_mass: f64 = support.iter().map(|(row, p)| p * keep(row)).sum();
        let weighting = Weighting::true_beta(beta.clone());
        let w = |row: &Row| weight(row.mask, row.label, &weighting).unwrap();
        let p_beta: Vec<f64> = support.iter().map(|(row, p)| p * keep(row) / kept_mass).collect();
        let expected_w: f64 = support.iter().zip(&p_beta).map(|((row, _), pb)| pb * w(row)).sum();
        for ((row, p), pb) in support.iter().zip(&p_beta) {
            worst_pmf = worst_pmf.max((pb * w(row) / expected_w - p).abs());
        }
        for _ in 0..2 {
            let h: Vec<bool> = (0..support.len()).map(|_| r.random::<bool>()).collect();
            let wrong = |row: &Row| (h[row.id] != row.label) as u8 as f64;
            let lhs: f64 = support.iter().zip(&p_beta).map(|((row, _), pb)| pb * w(row) * wrong(row)).sum::<f64>() / expected_w;
            let rhs: f64 = support.iter().map(|(row, p)| p * wrong(row)).sum();
            worst_loss = worst_loss.max((lhs - rhs).abs());
        }
    }
    let ok = worst_pmf <= 1e-10 && worst_loss <= 1e-10;
    outcome(ok, format!("pmf identity max gap {worst_pmf:.2e}, loss identity max gap {worst_loss:.2e} over 20 hypotheses"))
}

fn theorem_spec() -> McSpec {
    McSpec { epsilon: 0.3, delta: 0.1, seed: 4, ..McSpec::default() }
}

// 4. End-to-end accuracy of the normalized risk at the bound's sample sizes.
fn criterion_4() -> Outcome {
    let rep = mc_verify_lemma("T2", 300, &theorem_spec()).unwrap();
    let coverage = 1.0 - rep.failure_rate;
    let rows: usize = rep.sizes.m_i.iter().chain(&rep.sizes.m_beta_i).sum();
    outcome(
        coverage >= 0.9 && rep.passed,
        format!(
            "coverage {coverage:.3} over {} trials (binomial p = {:.3}); m_beta {}, m_i {:?}, m_beta_i {:?}, group rows per trial >= {rows}",
            rep.trials, rep.p_value, rep.sizes.m_beta, rep.sizes.m_i, rep.sizes.m_beta_i
        ),
    )
}

// 5. Concentration checks for the individual rate and weight estimates.
fn criterion_5() -> Outcome {
    let spec = McSpec { seed: 5, ..McSpec::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["B_p", "B_pbeta", "B_binv", "B9", "A2", "C2", "A3"] {
        let rep = mc_verify_lemma(id, 500, &spec).unwrap();
        let pass = if id == "A3" { rep.failures == 0 } else { rep.passed };
        ok &= pass;
        parts.push(format!("{id} {}/{} (budget {:.4})", rep.failures, rep.trials, rep.budget));
    }
    outcome(ok, parts.join(", "))
}

// 6. Analytic gradient against central differences.
fn criterion_6() -> Outcome {
    let s = PopulationSpec { feature_dim: 3, feature_model: FeatureModel::symmetric(3, 1.0), ..random_spec(&mut rng(6), 2) };
    let data = sample_dataset_with(&s, 50, 6, Parallelism::Sequential).unwrap();
    let mut r = rng(66);
    let weights: Vec<f64> = (0..50).map(|_| r.random_range(0.5..3.0)).collect();
    let l2 = 0.05;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut model = LinearModel::zeros(3, 2, true);
        for w in &mut model.weights {
            *w = r.random_range(-2.0..2.0);
        }
        model.intercept = r.random_range(-1.0..1.0);
        let g = weighted_gradient(&model, &data, &weights, l2).unwrap();
        let h = 1e-5;
        for (j, &gj) in g.iter().enumerate() {
            let bump = |delta: f64| {
                let mut m = model.clone();
                if j < m.dim() {
                    m.weights[j] += delta;
                } else {
                    m.intercept += delta;
                }
                weighted_objective(&m, &data, &weights, l2).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            let rel = (fd - gj).abs() / gj.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    outcome(worst <= 1e-5, format!("max relative error {worst:.2e} over 10 points (limit 1e-5)"))
}

// 7. Reweighting closes most of the gap to unbiased training.
fn criterion_7() -> Outcome {
    let cfg = ExperimentConfig {
        beta: BetaSpec::Random { seed: None, low: 0.3, high: 0.7 },
        methods: vec![Method::Reweighted, Method::Biased, Method::UnbiasedDown],
        master_seed: 7,
        learner: TrainConfig { epochs: 300, ..TrainConfig::default() },
        ..ExperimentConfig::new(Source::Synthetic { spec: default_synthetic_spec(), n: 5000 }, Seeds::Count(100))
    };
    let report = run_experiment(&cfg).unwrap();
    let acc = |m: Method| report.runs.iter().filter(|r| r.method == m).map(|r| r.metrics.accuracy).collect::<Vec<_>>();
    let (rw, bi, un) = (median(acc(Method::Reweighted)), median(acc(Method::Biased)), median(acc(Method::UnbiasedDown)));
    let mut pairs = 0;
    let mut wins = 0;
    for seed in 0..100u64 {
        let find = |m: Method| report.runs.iter().find(|r| r.seed == seed && r.method == m).unwrap();
        let (a, b) = (find(Method::Reweighted), find(Method::Biased));
        for (ga, gb) in a.metrics.group_accuracy.iter().zip(&b.metrics.group_accuracy) {
            if let (Some(ga), Some(gb)) = (ga, gb) {
                pairs += 1;
                wins += (ga >= gb) as usize;
            }
        }
    }
    let share = wins as f64 / pairs as f64;
    let ok = rw >= bi && (rw - un).abs() <= 0.02 && share >= 0.7;
    outcome(
        ok,
        format!("median accuracy reweighted {rw:.4}, biased {bi:.4}, unbiased_down {un:.4}; per-group reweighted >= biased in {share:.3} of {pairs} pairs"),
    )
}

// 8. Chi-square calibration under independence.
fn criterion_8() -> Outcome {
    let s = spec(vec![0.3, 0.5], vec![0.4, 0.4]);
    let trials = 1000;
    let rejections: usize = (0..trials)
        .map(|t| {
            let d: Dataset = sample_dataset_with(&s, 5000, 8_000 + t, Parallelism::Sequential).unwrap();
            (pairwise_chi2(&d, Condition::All).unwrap().p_value[0][1].unwrap() < 0.05) as usize
        })
        .sum();
    let rate = rejections as f64 / trials as f64;
    let (s0, p0) = chi2_2x2(&[[25, 25], [25, 25]]).unwrap();
    let (s1, p1) = chi2_2x2(&[[50, 0], [0, 50]]).unwrap();
    let ok = (0.02..=0.08).contains(&rate) && s0 == 0.0 && p0 == 1.0 && (s1 - 100.0).abs() < 1e-9 && p1 < 1e-20;
    outcome(ok, format!("rejection rate {rate:.3} at alpha 0.05; uniform table p = {p0}; diagonal table stat {s1}, p = {p1:.3e}"))
}

// 9. Near-optimality of the finite-class ERM output.
fn criterion_9() -> Outcome {
    let rep = mc_verify_lemma("T3", 200, &McSpec { seed: 9, ..theorem_spec() }).unwrap();
    let coverage = 1.0 - rep.failure_rate;
    outcome(coverage >= 0.9, format!("normalized risk <= min true loss + eps in {coverage:.3} of {} trials", rep.trials))
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("inverse-retention identity on exact rates", Duration::from_secs(1), criterion_1),
        ("fixed-point solvers", Duration::from_secs(5), criterion_2),
        ("exact enumeration of the reweighting identities", Duration::from_secs(10), criterion_3),
        ("coverage at the theorem sample sizes", Duration::from_secs(120), criterion_4),
        ("lemma Monte Carlo suite", Duration::from_secs(300), criterion_5),
        ("gradient vs finite differences", Duration::from_secs(60), criterion_6),
        ("end-to-end accuracy trend", Duration::from_secs(300), criterion_7),
        ("chi-square calibration", Duration::from_secs(120), criterion_8),
        ("near-optimal finite-class ERM", Duration::from_secs(120), criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.passed && elapsed <= *limit;
        failed += !pass as usize;
        println!(
            "criterion {}: {} | {name} | {} | {:.2}s (limit {}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
