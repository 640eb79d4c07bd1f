//! Monte Carlo checks of the concentration lemmas behind the sample-size bounds.
//!
//! Every trial draws a fresh unbiased batch and/or a fresh biased batch from a
//! known synthetic population (theoretical filter), sized by the lemma's own
//! bound, and records whether the lemma's failure event occurred. Targets are
//! the exact population quantities, never the raw generator parameters.
//!
//! Batches are grown one row at a time until every per-group requirement is
//! met, so each group ends up with at least its prescribed count.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{amplification, batch_rates, estimate_beta, estimate_rates, required_sample_sizes, SampleSizeSpec};
use crate::bias_filter::{BetaVector, FilterMode};
use crate::data::{Dataset, Row};
use crate::error::{Batch, Error, Result};
use crate::generator::{FeatureModel, PopulationSpec, RowSampler};
use crate::learner::finite::{class_losses, FiniteClass};
use crate::par::{self, Parallelism};
use crate::population::{stump_loss, PopulationRates};
use crate::reweight::{normalized_rber, rber, Weighting};
use crate::rng::{self, Rng};
use crate::special::binomial_upper_tail;

/// Stable lemma identifiers. `T2` and `T3` check the end-to-end guarantees
/// (accuracy of the normalized risk of the ERM output, and its near
/// optimality) at the sizes returned by [`required_sample_sizes`].
pub const LEMMA_IDS: &[&str] = &["A2", "A3", "B_p", "B_pbeta", "B_binv", "B9", "C2", "D1", "T2", "T3"];

/// Confidence of the one-sided binomial check.
const CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub epsilon: f64,
    pub delta: f64,
    pub population: PopulationSpec,
    pub betas: Vec<f64>,
    pub hclass: FiniteClass,
    pub seed: u64,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            epsilon: 0.1,
            delta: 0.1,
            // p0 = 0.5 exactly, so the realized group rates equal p_i
            population: PopulationSpec {
                k: 2,
                gamma: vec![0.8, 0.8],
                p_groups: vec![0.5, 0.5],
                feature_dim: 1,
                feature_model: FeatureModel::symmetric(1, 2.0),
            },
            betas: vec![0.8, 0.9],
            hclass: FiniteClass::grid(0, -1.5, 1.5, 10).expect("nonempty grid"),
            seed: 0,
            parallelism: Parallelism::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSizes {
    /// Minimum unbiased rows per group (empty when no unbiased batch is drawn).
    pub m_i: Vec<usize>,
    /// Minimum biased rows per group.
    pub m_beta_i: Vec<usize>,
    /// Minimum biased batch size.
    pub m_beta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub lemma: String,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Failure probability the lemma allows.
    pub budget: f64,
    /// `Pr[X >= failures]` for `X ~ Binomial(trials, budget)`.
    pub p_value: f64,
    pub passed: bool,
    pub sizes: BatchSizes,
    /// Secondary event rate, when the lemma has one (C2: multiplicative form).
    pub diagnostic_rate: Option<f64>,
}

struct Context<'a> {
    spec: &'a McSpec,
    sampler: RowSampler<'a>,
    beta: BetaVector,
    rates: PopulationRates,
    /// Keep probability of a positive, indexed by mask bits.
    keep: Vec<f64>,
    true_losses: Vec<f64>,
    amplification: f64,
}

struct Outcome {
    failed: bool,
    diagnostic: bool,
}

impl<'a> Context<'a> {
    fn new(spec: &'a McSpec) -> Result<Self> {
        let pop = &spec.population;
        if spec.betas.len() != pop.k {
            return Err(Error::DimensionMismatch { expected: pop.k, got: spec.betas.len() });
        }
        if !(spec.epsilon > 0.0 && spec.epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(spec.epsilon));
        }
        if !(spec.delta > 0.0 && spec.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta = {} must lie in (0, 1)", spec.delta)));
        }
        if spec.hclass.hypotheses.iter().any(|h| h.feature >= pop.feature_dim) {
            return Err(Error::DimensionMismatch { expected: pop.feature_dim, got: pop.feature_dim + 1 });
        }
        let sampler = pop.sampler()?;
        let g_pos = pop.positive_membership_rates(sampler.p0());
        let beta = BetaVector::theoretical(&g_pos, spec.betas.clone())?;
        let rates = PopulationRates::compute(pop, &beta, FilterMode::Theoretical)?;
        let keep = rates.cells.iter().map(|c| c.keep).collect();
        let true_losses = spec.hclass.hypotheses.iter().map(|h| stump_loss(pop, rates.p0, h)).collect();
        let amplification = amplification(&beta);
        Ok(Context { spec, sampler, beta, rates, keep, true_losses, amplification })
    }

    fn k(&self) -> f64 {
        self.spec.population.k as f64
    }

    /// `ln(4(k+3)/delta)`
    fn ln_lemma(&self) -> f64 {
        (4.0 * (self.k() + 3.0) / self.spec.delta).ln()
    }

    /// `ln(4|H|(k+3)/delta)`
    fn ln_class(&self) -> f64 {
        (4.0 * self.spec.hclass.size() as f64 * (self.k() + 3.0) / self.spec.delta).ln()
    }

    fn chernoff(&self, rate: f64) -> usize {
        let e = self.spec.epsilon;
        (3.0 / (e * e * rate) * self.ln_lemma()).ceil() as usize
    }

    fn unbiased_sizes(&self) -> Vec<usize> {
        self.rates.p_groups.iter().map(|&p| self.chernoff(p)).collect()
    }

    fn biased_sizes(&self) -> Vec<usize> {
        self.rates.pbeta_groups.iter().map(|&p| self.chernoff(p)).collect()
    }

    fn sizes(&self, lemma: &str) -> Result<BatchSizes> {
        let e = self.spec.epsilon;
        let a = self.amplification;
        let ew = self.rates.expected_weight;
        let none = Vec::new;
        let a2 = || ((a - 1.0).powi(2) / (2.0 * e * e * ew * ew) * self.ln_lemma()).ceil().max(1.0) as usize;
        Ok(match lemma {
            "B_p" => BatchSizes { m_i: self.unbiased_sizes(), m_beta_i: none(), m_beta: 0 },
            "B_pbeta" => BatchSizes { m_i: none(), m_beta_i: self.biased_sizes(), m_beta: 0 },
            "B_binv" | "B9" => BatchSizes { m_i: self.unbiased_sizes(), m_beta_i: self.biased_sizes(), m_beta: 0 },
            "A2" | "A3" => BatchSizes { m_i: none(), m_beta_i: none(), m_beta: a2() },
            "C2" => {
                let m = (1.0 / (2.0 * e * e) * self.ln_class() * (a / ew).powi(2)).ceil() as usize;
                BatchSizes { m_i: none(), m_beta_i: none(), m_beta: m }
            }
            "D1" => {
                let m = ((a - 1.0).powi(2) / (2.0 * e * e) * self.ln_class()).ceil().max(1.0) as usize;
                BatchSizes { m_i: self.unbiased_sizes(), m_beta_i: self.biased_sizes(), m_beta: m }
            }
            "T2" | "T3" => {
                let s = required_sample_sizes(&SampleSizeSpec {
                    epsilon: e,
                    delta: self.spec.delta,
                    k: self.spec.population.k,
                    hclass_dim: self.spec.hclass.size(),
                    beta: self.beta.clone(),
                    p_groups: self.rates.p_groups.clone(),
                    pbeta_groups: self.rates.pbeta_groups.clone(),
                })?;
                let cast = |v: &[u64]| v.iter().map(|&x| x.max(1) as usize).collect();
                BatchSizes { m_i: cast(&s.m_i), m_beta_i: cast(&s.m_beta_i), m_beta: s.m_beta.max(1) as usize }
            }
            other => return Err(Error::UnknownLemma(other.to_string())),
        })
    }

    fn budget(&self, lemma: &str) -> f64 {
        match lemma {
            "A3" => 0.0,
            "D1" | "T2" | "T3" => self.spec.delta,
            _ => self.spec.delta / (2.0 * (self.k() + 3.0)),
        }
    }

    /// Draws rows until there are `total` of them and every group `g` has
    /// `per_group[g]` members. Biased draws pass each positive through the
    /// retention coin.
    fn draw_batch(&self, rng: &mut Rng, per_group: &[usize], total: usize, biased: bool) -> Result<Dataset> {
        let k = self.spec.population.k;
        let mut counts = vec![0usize; k];
        let mut missing = per_group.iter().filter(|&&m| m > 0).count();
        let mut rows = Vec::new();
        while missing > 0 || rows.len() < total {
            let row: Row = self.sampler.draw(rng);
            if biased && row.label && rng.random::<f64>() >= self.keep[row.mask.0 as usize] {
                continue;
            }
            for g in row.mask.groups() {
                counts[g] += 1;
                if per_group.get(g).is_some_and(|&m| counts[g] == m) {
                    missing -= 1;
                }
            }
            rows.push(row);
        }
        Dataset::with_ids(k, self.spec.population.feature_dim, rows)
    }

    fn trial(&self, lemma: &str, sizes: &BatchSizes, index: usize) -> Result<Outcome> {
        let mut rng = rng::stream(self.spec.seed, &format!("mc_verify/{lemma}"), index as u64);
        let unbiased = if sizes.m_i.is_empty() {
            None
        } else {
            Some(self.draw_batch(&mut rng, &sizes.m_i, 0, false)?)
        };
        let biased = if sizes.m_beta_i.is_empty() && sizes.m_beta == 0 {
            None
        } else {
            Some(self.draw_batch(&mut rng, &sizes.m_beta_i, sizes.m_beta, true)?)
        };
        let e = self.spec.epsilon;
        let r = &self.rates;
        let outcome = |failed| Ok(Outcome { failed, diagnostic: false });
        let true_weights = Weighting::true_beta(self.beta.clone());

        match lemma {
            "B_p" => {
                let u = batch_rates(unbiased.as_ref().unwrap(), Batch::Unbiased)?;
                outcome(u.groups.iter().zip(&r.p_groups).any(|(h, p)| (h - p).abs() >= e * p))
            }
            "B_pbeta" => {
                let b = batch_rates(biased.as_ref().unwrap(), Batch::Biased)?;
                outcome(b.groups.iter().zip(&r.pbeta_groups).any(|(h, p)| (h - p).abs() >= e * p))
            }
            "B_binv" | "B9" => {
                let est = estimate_beta(&estimate_rates(unbiased.as_ref().unwrap(), biased.as_ref().unwrap())?)?;
                let truth = r.inverse_group_retention();
                if lemma == "B_binv" {
                    outcome(est.inv_beta_hat.iter().zip(&truth).any(|(h, t)| (h - t).abs() > 3.0 * e * t))
                } else {
                    let ph: f64 = est.inv_beta_hat.iter().product();
                    let pt: f64 = truth.iter().product();
                    outcome((ph - pt).abs() >= 9.0 * e * pt)
                }
            }
            "A2" => {
                let b = biased.as_ref().unwrap();
                let mass: f64 = true_weights.row_weights(b)?.iter().sum();
                let ratio = b.len() as f64 / mass;
                outcome((ratio - 1.0 / r.expected_weight).abs() > e * ratio)
            }
            "A3" => {
                let b = biased.as_ref().unwrap();
                let mut failed = false;
                for h in &self.spec.hclass.hypotheses {
                    failed |= normalized_rber(b, h, &true_weights)? > 1.0;
                }
                outcome(failed)
            }
            "C2" => {
                let b = biased.as_ref().unwrap();
                let (mut additive, mut multiplicative) = (false, false);
                for (h, &truth) in self.spec.hclass.hypotheses.iter().zip(&self.true_losses) {
                    let gap = (rber(b, h, &true_weights)? / r.expected_weight - truth).abs();
                    additive |= gap > e;
                    multiplicative |= gap > e * truth;
                }
                Ok(Outcome { failed: additive, diagnostic: multiplicative })
            }
            "D1" | "T2" | "T3" => {
                let (u, b) = (unbiased.as_ref().unwrap(), biased.as_ref().unwrap());
                let weighting = Weighting::estimated(estimate_beta(&estimate_rates(u, b)?)?);
                let losses = class_losses(b, &weighting, &self.spec.hclass, Parallelism::Sequential)?;
                let best = (0..losses.len()).fold(0, |best, i| if losses[i] < losses[best] { i } else { best });
                let gap = (losses[best] - self.true_losses[best]).abs();
                match lemma {
                    "D1" => {
                        let inv_prod: f64 = self.beta.betas.iter().map(|b| 1.0 / b).product();
                        outcome(gap > 2.0 * e + 9.0 * e * inv_prod)
                    }
                    "T2" => outcome(gap > e),
                    _ => {
                        let min_true = self.true_losses.iter().copied().fold(f64::INFINITY, f64::min);
                        outcome(losses[best] > min_true + e)
                    }
                }
            }
            other => Err(Error::UnknownLemma(other.to_string())),
        }
    }
}

/// Maps the long lemma names onto the stable ids.
fn canonical(lemma: &str) -> &str {
    match lemma {
        "estimating_p" => "B_p",
        "estimating_p_beta" => "B_pbeta",
        "estimating_beta_inverse" => "B_binv",
        other => other,
    }
}

/// Runs `trials` independent trials of one lemma and compares the empirical
/// failure rate with the lemma's failure budget.
pub fn mc_verify_lemma(lemma: &str, trials: usize, spec: &McSpec) -> Result<CoverageReport> {
    let lemma = canonical(lemma);
    if !LEMMA_IDS.contains(&lemma) {
        return Err(Error::UnknownLemma(lemma.to_string()));
    }
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 trials, got {trials}")));
    }
    let ctx = Context::new(spec)?;
    let sizes = ctx.sizes(lemma)?;
    let budget = ctx.budget(lemma);
    let outcomes = par::map_indices(trials, spec.parallelism, |t| ctx.trial(lemma, &sizes, t));
    let (mut failures, mut diagnostics) = (0usize, 0usize);
    for o in outcomes {
        let o = o?;
        failures += o.failed as usize;
        diagnostics += o.diagnostic as usize;
    }
    let p_value = binomial_upper_tail(trials as u64, failures as u64, budget);
    let passed = if budget == 0.0 { failures == 0 } else { p_value > 1.0 - CONFIDENCE };
    Ok(CoverageReport {
        lemma: lemma.to_string(),
        trials,
        failures,
        failure_rate: failures as f64 / trials as f64,
        budget,
        p_value,
        passed,
        sizes,
        diagnostic_rate: (lemma == "C2").then(|| diagnostics as f64 / trials as f64),
    })
}
