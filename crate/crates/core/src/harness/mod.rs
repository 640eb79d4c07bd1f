//! End-to-end experiment loop.
//!
//! Per seed: split the data into train and test, carve an unbiased holdout
//! out of train, filter the rest of train into the biased batch, estimate
//! inverse retentions from (holdout, biased), train every requested method
//! and evaluate it on the untouched test split.
//!
//! Every random draw takes its stream from `(master_seed, purpose, seed)`,
//! so adding or removing a method never changes the draws of another.

pub mod io;
pub mod metrics;
pub mod report;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, DEFAULT_SMOTE_K};
use crate::bias_filter::{apply_filter, BetaVector, FilterMode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{estimate_beta, estimate_rates, required_sample_sizes, BetaEstimates, SampleSizeSpec, SampleSizes};
use crate::generator::{sample_dataset_with, PopulationSpec};
use crate::learner::{train_weighted_logistic, LinearModel, TrainConfig};
use crate::par::{self, Parallelism};
use crate::reweight::Weighting;
use crate::rng;

pub use io::{load_csv, load_dataset, read_dataset, save_dataset, write_dataset, CsvSchema};
pub use metrics::{evaluate_metrics, Metrics};
pub use report::{emit_report, ReportFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Reweighted,
    Biased,
    UnbiasedDown,
    Smote,
    Under,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Reweighted, Method::Biased, Method::UnbiasedDown, Method::Smote, Method::Under];

    pub fn name(self) -> &'static str {
        match self {
            Method::Reweighted => "reweighted",
            Method::Biased => "biased",
            Method::UnbiasedDown => "unbiased_down",
            Method::Smote => "smote",
            Method::Under => "under",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic { spec: PopulationSpec, n: usize },
    Csv { path: PathBuf, schema: CsvSchema },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSpec {
    /// Fixed retention rates. `beta0` is solved when omitted (theoretical mode).
    Fixed {
        betas: Vec<f64>,
        #[serde(default)]
        beta0: Option<f64>,
    },
    /// Each `beta_i` drawn uniformly from `[low, high]`, anew for every run seed.
    Random {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
}

fn default_low() -> f64 {
    0.3
}

fn default_high() -> f64 {
    0.9
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Random { seed: None, low: default_low(), high: default_high() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(usize),
    List(Vec<u64>),
}

impl Seeds {
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n as u64).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// Optional gate: record the sizes the bounds ask for and whether each run met them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeGate {
    pub epsilon: f64,
    pub delta: f64,
    pub hclass_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: Source,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default)]
    pub filter_mode: FilterMode,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_holdout_fraction")]
    pub holdout_fraction: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub seeds: Seeds,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub learner: TrainConfig,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    #[serde(default)]
    pub sample_size: Option<SampleSizeGate>,
    #[serde(default)]
    pub parallelism: Parallelism,
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_holdout_fraction() -> f64 {
    0.2
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_smote_k() -> usize {
    DEFAULT_SMOTE_K
}

impl ExperimentConfig {
    pub fn new(source: Source, seeds: Seeds) -> Self {
        ExperimentConfig {
            source,
            beta: BetaSpec::default(),
            filter_mode: FilterMode::default(),
            train_fraction: default_train_fraction(),
            holdout_fraction: default_holdout_fraction(),
            methods: default_methods(),
            seeds,
            master_seed: 0,
            learner: TrainConfig::default(),
            smote_k: DEFAULT_SMOTE_K,
            sample_size: None,
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        frac("train_fraction", self.train_fraction)?;
        frac("holdout_fraction", self.holdout_fraction)?;
        if self.seeds.resolve().is_empty() {
            return Err(Error::InvalidArgument("seeds must be nonempty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("methods must be nonempty".into()));
        }
        if let BetaSpec::Random { low, high, .. } = self.beta {
            if !(0.0 < low && low <= high && high <= 1.0) {
                return Err(Error::InvalidArgument(format!("beta range [{low}, {high}] must satisfy 0 < low <= high <= 1")));
            }
        }
        if let Source::Synthetic { spec, .. } = &self.source {
            spec.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub train: usize,
    pub test: usize,
    pub holdout: usize,
    pub biased: usize,
    /// Rows the method was trained on.
    pub training_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: Method,
    pub metrics: Metrics,
    /// Retention rates used to filter this run.
    pub beta: BetaVector,
    pub beta_hat: BetaEstimates,
    pub counts: Counts,
    pub sample_sizes: Option<SampleSizes>,
    pub meets_sample_sizes: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub beta: BetaSpec,
    pub filter_mode: FilterMode,
    pub train_fraction: f64,
    pub holdout_fraction: f64,
    pub smote_k: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub runs: Vec<RunRecord>,
}

/// Every batch of one run, before any training.
#[derive(Debug, Clone)]
pub struct RunData {
    pub seed: u64,
    /// Full training split (holdout plus the part that gets filtered).
    pub train: Dataset,
    pub test: Dataset,
    pub holdout: Dataset,
    pub biased: Dataset,
    pub beta: BetaVector,
}

fn stream_seed(cfg: &ExperimentConfig, label: &str, seed: u64) -> u64 {
    rng::derive_seed(cfg.master_seed, label, seed)
}

/// Loads or generates the data of one run. CSV sources are shared by all runs.
fn source_data(cfg: &ExperimentConfig, shared: Option<&Dataset>, seed: u64) -> Result<Dataset> {
    match (&cfg.source, shared) {
        (_, Some(d)) => Ok(d.clone()),
        (Source::Synthetic { spec, n }, None) => {
            sample_dataset_with(spec, *n, stream_seed(cfg, "data", seed), Parallelism::Sequential)
        }
        (Source::Csv { path, schema }, None) => load_csv(path, schema),
    }
}

/// Share of positive rows that belong to each group.
pub fn positive_membership(data: &Dataset) -> Vec<f64> {
    let mut counts = vec![0usize; data.k()];
    let mut pos = 0usize;
    for r in data.rows().iter().filter(|r| r.label) {
        pos += 1;
        for g in r.mask.groups() {
            counts[g] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / pos.max(1) as f64).collect()
}

fn run_beta(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<BetaVector> {
    let k = data.k();
    let betas = match &cfg.beta {
        BetaSpec::Fixed { betas, beta0 } => {
            if betas.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: betas.len() });
            }
            if let Some(b0) = beta0 {
                return BetaVector::new(*b0, betas.clone());
            }
            betas.clone()
        }
        BetaSpec::Random { seed: beta_seed, low, high } => {
            let mut r = rng::stream(beta_seed.unwrap_or(cfg.master_seed), "beta", seed);
            (0..k).map(|_| if low == high { *low } else { r.random_range(*low..=*high) }).collect()
        }
    };
    match cfg.filter_mode {
        FilterMode::Empirical => BetaVector::empirical(betas),
        FilterMode::Theoretical => {
            let g_pos = match &cfg.source {
                Source::Synthetic { spec, .. } => spec.positive_membership_rates(spec.p0()?),
                Source::Csv { .. } => positive_membership(data),
            };
            BetaVector::theoretical(&g_pos, betas)
        }
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "shuffle", 0));
    idx
}

/// Splits, carves the holdout, draws `beta` and filters. Test rows never
/// enter any later step.
pub fn prepare_run(cfg: &ExperimentConfig, shared: Option<&Dataset>, seed: u64) -> Result<RunData> {
    let data = source_data(cfg, shared, seed)?;
    let order = shuffled(data.len(), stream_seed(cfg, "split", seed));
    let n_train = (cfg.train_fraction * data.len() as f64).round() as usize;
    let (train_idx, test_idx) = order.split_at(n_train);
    let train = data.select(train_idx);
    let test = data.select(test_idx);

    let order = shuffled(train.len(), stream_seed(cfg, "holdout", seed));
    let n_hold = (cfg.holdout_fraction * train.len() as f64).round() as usize;
    let (hold_idx, rest_idx) = order.split_at(n_hold);
    let holdout = train.select(hold_idx);
    let rest = train.select(rest_idx);

    let beta = run_beta(cfg, &data, seed)?;
    let biased = apply_filter(&rest, &beta, cfg.filter_mode, stream_seed(cfg, "filter", seed))?;
    Ok(RunData { seed, train, test, holdout, biased, beta })
}

/// Training set and row weights for one method.
pub fn method_training_set(
    cfg: &ExperimentConfig,
    run: &RunData,
    method: Method,
    beta_hat: &BetaEstimates,
) -> Result<(Dataset, Vec<f64>)> {
    let seed = run.seed;
    let data = match method {
        Method::Reweighted => {
            let w = Weighting::estimated(beta_hat.clone()).row_weights(&run.biased)?;
            return Ok((run.biased.clone(), w));
        }
        Method::Biased => run.biased.clone(),
        Method::UnbiasedDown => {
            baselines::downsample_unbiased(&run.train, run.biased.len(), stream_seed(cfg, "unbiased_down", seed))?
        }
        Method::Smote => baselines::smote_lite(&run.biased, cfg.smote_k, stream_seed(cfg, "smote", seed))?,
        Method::Under => baselines::random_undersample(&run.biased, stream_seed(cfg, "under", seed))?,
    };
    let n = data.len();
    Ok((data, vec![1.0; n]))
}

fn gate(cfg: &ExperimentConfig, run: &RunData, est: &crate::estimator::RateEstimates) -> Result<Option<(SampleSizes, bool)>> {
    let Some(g) = &cfg.sample_size else { return Ok(None) };
    let clamp = |v: &[f64]| v.iter().map(|p| p.clamp(1e-12, 1.0)).collect();
    let sizes = required_sample_sizes(&SampleSizeSpec {
        epsilon: g.epsilon,
        delta: g.delta,
        k: run.beta.k(),
        hclass_dim: g.hclass_dim,
        beta: run.beta.clone(),
        p_groups: clamp(&est.p_hat),
        pbeta_groups: clamp(&est.pbeta_hat),
    })?;
    let meets = run.biased.len() as u64 >= sizes.m_beta
        && est.m_beta_i.iter().zip(&sizes.m_beta_i).all(|(&have, &need)| have as u64 >= need)
        && est.m_i.iter().zip(&sizes.m_i).all(|(&have, &need)| have as u64 >= need);
    Ok(Some((sizes, meets)))
}

fn tag(seed: u64, method: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Run { seed, method: method.to_string(), source: Box::new(e) }
}

/// Trains one method of one run; returns the model and its training-set size.
pub fn train_method(
    cfg: &ExperimentConfig,
    run: &RunData,
    method: Method,
    beta_hat: &BetaEstimates,
) -> Result<(LinearModel, usize)> {
    let (data, weights) = method_training_set(cfg, run, method, beta_hat)?;
    let learner = TrainConfig { seed: stream_seed(cfg, &format!("learner/{method}"), run.seed), ..cfg.learner.clone() };
    Ok((train_weighted_logistic(&data, &weights, &learner)?, data.len()))
}

fn run_seed(cfg: &ExperimentConfig, shared: Option<&Dataset>, seed: u64) -> Result<Vec<RunRecord>> {
    let run = prepare_run(cfg, shared, seed).map_err(tag(seed, "prepare"))?;
    let rates = estimate_rates(&run.holdout, &run.biased).map_err(tag(seed, "estimate"))?;
    let beta_hat = estimate_beta(&rates).map_err(tag(seed, "estimate"))?;
    let gated = gate(cfg, &run, &rates).map_err(tag(seed, "sample_size"))?;
    let mut records = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let name = method.name();
        let (model, training_rows) = train_method(cfg, &run, method, &beta_hat).map_err(tag(seed, name))?;
        records.push(RunRecord {
            seed,
            method,
            metrics: evaluate_metrics(&model, &run.test).map_err(tag(seed, name))?,
            beta: run.beta.clone(),
            beta_hat: beta_hat.clone(),
            counts: Counts {
                train: run.train.len(),
                test: run.test.len(),
                holdout: run.holdout.len(),
                biased: run.biased.len(),
                training_rows,
            },
            sample_sizes: gated.as_ref().map(|g| g.0.clone()),
            meets_sample_sizes: gated.as_ref().map(|g| g.1),
        });
    }
    Ok(records)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let shared = match &cfg.source {
        Source::Csv { path, schema } => Some(load_csv(path, schema)?),
        Source::Synthetic { .. } => None,
    };
    let seeds = cfg.seeds.resolve();
    let per_seed = par::map_slice(&seeds, cfg.parallelism, |&s| run_seed(cfg, shared.as_ref(), s));
    let mut runs = Vec::with_capacity(seeds.len() * cfg.methods.len());
    for records in per_seed {
        runs.extend(records?);
    }
    Ok(MetricsReport {
        meta: ReportMeta {
            beta: cfg.beta.clone(),
            filter_mode: cfg.filter_mode,
            train_fraction: cfg.train_fraction,
            holdout_fraction: cfg.holdout_fraction,
            smote_k: cfg.smote_k,
            master_seed: cfg.master_seed,
            methods: cfg.methods.clone(),
        },
        runs,
    })
}

/// Synthetic population used when none is given: three overlapping groups
/// with distinct base rates and a three-dimensional label-dependent feature.
pub fn default_synthetic_spec() -> PopulationSpec {
    PopulationSpec {
        k: 3,
        gamma: vec![0.3, 0.4, 0.5],
        p_groups: vec![0.3, 0.4, 0.5],
        feature_dim: 3,
        feature_model: crate::generator::FeatureModel::symmetric(3, 1.0),
    }
}
