//! Synthetic populations with independent group membership.
//!
//! Memberships are `k` independent coins with rates `gamma`. Given the exact
//! membership set `I`, the label is `Bernoulli(p0^(1-|I|) * prod_{i in I} p_i)`,
//! where `p0` solves `1 = prod_i (1 - gamma_i + gamma_i * p_i / p0)` so that the
//! population positive rate is exactly `p0`. Auxiliary features are spherical
//! Gaussians whose mean depends on the label only.

use std::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupMask, Row, MAX_GROUPS};
use crate::error::{Error, Result};
use crate::fixed_point;
use crate::par::{self, Parallelism};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub mean: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub positive: ClassGaussian,
    pub negative: ClassGaussian,
}

impl FeatureModel {
    /// Positive class centred at `+separation/2` on every axis, negative at
    /// `-separation/2`, unit variance.
    pub fn symmetric(dim: usize, separation: f64) -> Self {
        FeatureModel {
            positive: ClassGaussian { mean: vec![separation / 2.0; dim], variance: 1.0 },
            negative: ClassGaussian { mean: vec![-separation / 2.0; dim], variance: 1.0 },
        }
    }

    pub fn class(&self, label: bool) -> &ClassGaussian {
        if label {
            &self.positive
        } else {
            &self.negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub k: usize,
    pub gamma: Vec<f64>,
    pub p_groups: Vec<f64>,
    pub feature_dim: usize,
    pub feature_model: FeatureModel,
}

/// One failed admissibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    GroupCount(usize),
    Length { field: &'static str, expected: usize, got: usize },
    GammaOutOfRange { group: usize, value: f64 },
    RateOutOfRange { group: usize, value: f64 },
    FeatureShape(String),
    NoFixedPoint,
    /// The label probability at the given intersection exceeds 1.
    ConditionalAboveOne { mask: GroupMask, value: f64 },
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecViolation::GroupCount(k) => write!(f, "group count {k} not in 1..={MAX_GROUPS}"),
            SpecViolation::Length { field, expected, got } => {
                write!(f, "{field} has length {got}, expected {expected}")
            }
            SpecViolation::GammaOutOfRange { group, value } => {
                write!(f, "gamma out of open interval (0,1): gamma[{group}] = {value}")
            }
            SpecViolation::RateOutOfRange { group, value } => {
                write!(f, "p_groups out of open interval (0,1): p_groups[{group}] = {value}")
            }
            SpecViolation::FeatureShape(msg) => write!(f, "feature model: {msg}"),
            SpecViolation::NoFixedPoint => f.write_str("population positive rate has no root"),
            SpecViolation::ConditionalAboveOne { mask, value } => {
                write!(f, "conditional positive rate {value} > 1 at intersection {:#b}", mask.0)
            }
        }
    }
}

/// Solves for the population positive rate `p0`.
pub fn solve_p0(gamma: &[f64], p_groups: &[f64]) -> Result<f64> {
    if gamma.len() != p_groups.len() || gamma.is_empty() {
        return Err(Error::InvalidArgument("gamma and p_groups must be nonempty and equally long".into()));
    }
    let open = |v: &f64| *v > 0.0 && *v < 1.0;
    if !gamma.iter().all(open) || !p_groups.iter().all(open) {
        return Err(Error::InvalidArgument("gamma and p_groups must lie in (0,1)".into()));
    }
    let p0 = fixed_point::solve(gamma, p_groups)?;
    if let Some((mask, value)) = max_conditional(p0, p_groups) {
        return Err(Error::InvalidSpec(format!(
            "conditional positive rate {value} > 1 at intersection {:#b}",
            mask.0
        )));
    }
    Ok(p0)
}

/// Intersection with the largest label probability, if that probability
/// exceeds 1. The maximizing set is every group with `p_i > p0`.
fn max_conditional(p0: f64, p_groups: &[f64]) -> Option<(GroupMask, f64)> {
    let groups: Vec<usize> = (0..p_groups.len()).filter(|&i| p_groups[i] > p0).collect();
    let value = groups.iter().fold(p0, |acc, &i| acc * p_groups[i] / p0);
    (value > 1.0).then(|| (GroupMask::from_groups(&groups), value))
}

/// Lists every violated invariant; empty iff the spec is admissible.
pub fn validate_spec(spec: &PopulationSpec) -> Vec<SpecViolation> {
    let mut out = Vec::new();
    if spec.k == 0 || spec.k > MAX_GROUPS {
        out.push(SpecViolation::GroupCount(spec.k));
    }
    for (field, len) in [("gamma", spec.gamma.len()), ("p_groups", spec.p_groups.len())] {
        if len != spec.k {
            out.push(SpecViolation::Length { field, expected: spec.k, got: len });
        }
    }
    for (i, &g) in spec.gamma.iter().enumerate() {
        if !(g > 0.0 && g < 1.0) {
            out.push(SpecViolation::GammaOutOfRange { group: i, value: g });
        }
    }
    for (i, &p) in spec.p_groups.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            out.push(SpecViolation::RateOutOfRange { group: i, value: p });
        }
    }
    for (name, class) in [("positive", &spec.feature_model.positive), ("negative", &spec.feature_model.negative)] {
        if class.mean.len() != spec.feature_dim {
            out.push(SpecViolation::FeatureShape(format!(
                "{name} mean has length {}, feature_dim is {}",
                class.mean.len(),
                spec.feature_dim
            )));
        }
        if !(class.variance > 0.0 && class.variance.is_finite()) {
            out.push(SpecViolation::FeatureShape(format!("{name} variance {} must be positive", class.variance)));
        }
        if class.mean.iter().any(|m| !m.is_finite()) {
            out.push(SpecViolation::FeatureShape(format!("{name} mean has non-finite entries")));
        }
    }
    if !out.is_empty() {
        return out;
    }
    match fixed_point::solve(&spec.gamma, &spec.p_groups) {
        Ok(p0) => {
            if let Some((mask, value)) = max_conditional(p0, &spec.p_groups) {
                out.push(SpecViolation::ConditionalAboveOne { mask, value });
            }
        }
        Err(_) => out.push(SpecViolation::NoFixedPoint),
    }
    out
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let violations = validate_spec(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidSpec(msgs.join("; ")))
        }
    }

    pub fn p0(&self) -> Result<f64> {
        self.validate()?;
        solve_p0(&self.gamma, &self.p_groups)
    }

    /// `Pr[x in G_I exactly]` for a full membership pattern.
    pub fn mask_probability(&self, mask: GroupMask) -> f64 {
        (0..self.k)
            .map(|i| if mask.contains(i) { self.gamma[i] } else { 1.0 - self.gamma[i] })
            .product()
    }

    /// `Pr[y = 1 | G(x) = I] = p0^(1-|I|) * prod_{i in I} p_i`.
    pub fn label_probability(&self, p0: f64, mask: GroupMask) -> f64 {
        mask.groups().fold(p0, |acc, i| acc * self.p_groups[i] / p0)
    }

    /// `Pr[x in G_i | y = 1]` for every group. Memberships stay mutually
    /// independent conditional on a positive label.
    pub fn positive_membership_rates(&self, p0: f64) -> Vec<f64> {
        (0..self.k)
            .map(|i| {
                let lifted = self.gamma[i] * self.p_groups[i] / p0;
                lifted / (1.0 - self.gamma[i] + lifted)
            })
            .collect()
    }

    /// A sampler bound to this spec; validates once up front.
    pub fn sampler(&self) -> Result<RowSampler<'_>> {
        let p0 = self.p0()?;
        Ok(RowSampler { spec: self, p0, sd_pos: self.feature_model.positive.variance.sqrt(), sd_neg: self.feature_model.negative.variance.sqrt() })
    }
}

/// Draws single rows from a validated population.
#[derive(Debug, Clone)]
pub struct RowSampler<'a> {
    spec: &'a PopulationSpec,
    p0: f64,
    sd_pos: f64,
    sd_neg: f64,
}

impl RowSampler<'_> {
    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn spec(&self) -> &PopulationSpec {
        self.spec
    }

    pub fn draw(&self, rng: &mut Rng) -> Row {
        let mut bits = 0u16;
        for (i, &g) in self.spec.gamma.iter().enumerate() {
            if rng.random::<f64>() < g {
                bits |= 1 << i;
            }
        }
        let mask = GroupMask(bits);
        let label = rng.random::<f64>() < self.spec.label_probability(self.p0, mask);
        let class = self.spec.feature_model.class(label);
        let sd = if label { self.sd_pos } else { self.sd_neg };
        let features = class
            .mean
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect();
        Row::new(features, mask, label)
    }
}

const BLOCK: usize = 4096;

/// Draws `n` rows. Rows are produced in fixed blocks, each with its own
/// stream, so the output is identical in sequential and parallel mode.
pub fn sample_dataset(spec: &PopulationSpec, n: usize, seed: u64) -> Result<Dataset> {
    sample_dataset_with(spec, n, seed, Parallelism::Sequential)
}

pub fn sample_dataset_with(spec: &PopulationSpec, n: usize, seed: u64, mode: Parallelism) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let sampler = spec.sampler()?;
    let blocks = n.div_ceil(BLOCK);
    let chunks = par::map_indices(blocks, mode, |b| {
        let mut rng = rng::stream(seed, "sample_dataset", b as u64);
        let len = BLOCK.min(n - b * BLOCK);
        (0..len).map(|_| sampler.draw(&mut rng)).collect::<Vec<_>>()
    });
    let rows = chunks.into_iter().flatten().collect();
    Dataset::with_ids(spec.k, spec.feature_dim, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(gamma: [f64; 2], p: [f64; 2]) -> PopulationSpec {
        PopulationSpec {
            k: 2,
            gamma: gamma.to_vec(),
            p_groups: p.to_vec(),
            feature_dim: 1,
            feature_model: FeatureModel::symmetric(1, 2.0),
        }
    }

    #[test]
    fn p0_k1_limit() {
        let p0 = solve_p0(&[0.999], &[0.4]).unwrap();
        assert!((p0 - 0.4).abs() < 1e-10);
    }

    #[test]
    fn p0_k2_matches_quadratic_root() {
        // 0.045 u^2 + 0.225 u - 0.75 = 0 with u = 1/p0
        let u = (-0.225 + (0.225f64 * 0.225 + 4.0 * 0.045 * 0.75).sqrt()) / (2.0 * 0.045);
        let p0 = solve_p0(&[0.5, 0.5], &[0.3, 0.6]).unwrap();
        assert!((p0 - 1.0 / u).abs() < 1e-9);
        assert!((p0 - 0.43723).abs() < 1e-5);
        assert!(fixed_point::residual(&[0.5, 0.5], &[0.3, 0.6], 1.0 / p0).abs() <= 1e-10);
    }

    #[test]
    fn p0_symmetric() {
        let p0 = solve_p0(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert!((p0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn high_rates_violate_conditional_bound() {
        // with k = 2 one rate is always <= p0, so the bound needs k >= 3
        let spec = PopulationSpec {
            k: 3,
            gamma: vec![0.1, 0.95, 0.05],
            p_groups: vec![0.9, 0.08, 0.8],
            feature_dim: 1,
            feature_model: FeatureModel::symmetric(1, 2.0),
        };
        let p0 = fixed_point::solve(&spec.gamma, &spec.p_groups).unwrap();
        let both = 0.9 * 0.8 / p0;
        assert!(both > 1.0);
        let v = validate_spec(&spec);
        assert!(
            v.iter().any(|v| matches!(v, SpecViolation::ConditionalAboveOne { mask, .. } if mask.0 == 0b101)),
            "{v:?}"
        );
        assert!(matches!(solve_p0(&spec.gamma, &spec.p_groups), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn equal_rates_are_admissible() {
        assert!(validate_spec(&spec2([0.2, 0.7], [0.35, 0.35])).is_empty());
    }

    #[test]
    fn gamma_zero_is_reported() {
        let v = validate_spec(&spec2([0.0, 0.5], [0.3, 0.3]));
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("gamma out of open interval"));
    }

    #[test]
    fn zero_rows_is_an_error() {
        assert!(sample_dataset(&spec2([0.5, 0.5], [0.3, 0.6]), 0, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_mode_independent() {
        let spec = spec2([0.5, 0.5], [0.3, 0.6]);
        let a = sample_dataset_with(&spec, 10_000, 9, Parallelism::Sequential).unwrap();
        let b = sample_dataset_with(&spec, 10_000, 9, Parallelism::Parallel).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(&spec, 10_000, 10).unwrap();
        assert_ne!(a, c);
    }

    fn within_sigmas(successes: usize, n: usize, p: f64, sigmas: f64) -> bool {
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        ((successes as f64 / n as f64) - p).abs() <= sigmas * sd
    }

    #[test]
    fn intersection_rate_follows_product_rule() {
        let spec = spec2([0.5, 0.5], [0.3, 0.6]);
        let data = sample_dataset(&spec, 200_000, 2024).unwrap();
        let both: Vec<_> = data.rows().iter().filter(|r| r.mask.0 == 0b11).collect();
        let pos = both.iter().filter(|r| r.label).count();
        // 0.3 * 0.6 / 0.43723
        assert!(within_sigmas(pos, both.len(), 0.411_684_397, 3.0));
        assert!(within_sigmas(both.len(), data.len(), 0.25, 3.0));
    }

    #[test]
    fn positive_membership_rates_match_sampling() {
        let spec = spec2([0.3, 0.6], [0.25, 0.5]);
        let p0 = spec.p0().unwrap();
        let g = spec.positive_membership_rates(p0);
        let data = sample_dataset(&spec, 200_000, 5).unwrap();
        let positives: Vec<_> = data.rows().iter().filter(|r| r.label).collect();
        for (i, &gi) in g.iter().enumerate() {
            let c = positives.iter().filter(|r| r.mask.contains(i)).count();
            assert!(within_sigmas(c, positives.len(), gi, 4.0), "group {i}");
        }
    }
}
