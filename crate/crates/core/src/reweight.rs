//! Importance weights for the biased batch and the reweighted risks.
//!
//! `w(x, y) = 1` for negatives and `beta0^(|G(x)|-1) * prod_{i in G(x)} 1/beta_i`
//! for positives. The estimated weight plugs in `beta0_hat` and `1/beta_hat_i`.
//! Weights are evaluated per row; the biased batch is never resampled.

use serde::{Deserialize, Serialize};

use crate::bias_filter::BetaVector;
use crate::data::{Dataset, GroupMask};
use crate::error::{Error, Result};
use crate::estimator::BetaEstimates;
use crate::learner::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Every row weighs 1.
    Uniform,
    TrueBeta(BetaVector),
    Estimated(BetaEstimates),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighting {
    pub source: WeightSource,
    pub k: usize,
}

impl Weighting {
    pub fn uniform(k: usize) -> Self {
        Weighting { source: WeightSource::Uniform, k }
    }

    pub fn true_beta(beta: BetaVector) -> Self {
        let k = beta.k();
        Weighting { source: WeightSource::TrueBeta(beta), k }
    }

    pub fn estimated(est: BetaEstimates) -> Self {
        let k = est.inv_beta_hat.len();
        Weighting { source: WeightSource::Estimated(est), k }
    }

    pub fn weight(&self, mask: GroupMask, label: bool) -> Result<f64> {
        weight(mask, label, self)
    }

    /// Weight of every row, in row order.
    pub fn row_weights(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.k() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, got: data.k() });
        }
        data.rows().iter().map(|r| self.weight(r.mask, r.label)).collect()
    }
}

pub fn weight(mask: GroupMask, label: bool, weighting: &Weighting) -> Result<f64> {
    if !mask.fits(weighting.k) {
        return Err(Error::InvalidArgument(format!("mask {:#b} exceeds k = {}", mask.0, weighting.k)));
    }
    if !label {
        return Ok(1.0);
    }
    let exponent = mask.len() as i32 - 1;
    match &weighting.source {
        WeightSource::Uniform => Ok(1.0),
        WeightSource::TrueBeta(beta) => {
            let mut w = beta.beta0.powi(exponent);
            for i in mask.groups() {
                if beta.betas[i] == 0.0 {
                    return Err(Error::DegenerateBeta(i));
                }
                w /= beta.betas[i];
            }
            Ok(w)
        }
        WeightSource::Estimated(est) => {
            Ok(mask.groups().fold(est.beta0_hat.powi(exponent), |w, i| w * est.inv_beta_hat[i]))
        }
    }
}

fn weighted_error_sums<C: Classifier + ?Sized>(data: &Dataset, model: &C, weighting: &Weighting) -> Result<(f64, f64)> {
    let mut err = 0.0;
    let mut mass = 0.0;
    for row in data.rows() {
        let w = weighting.weight(row.mask, row.label)?;
        mass += w;
        if model.classify(row) != row.label {
            err += w;
        }
    }
    Ok((err, mass))
}

/// Mean of `w * 1[h(x) != y]` over the biased batch.
pub fn rber<C: Classifier + ?Sized>(data: &Dataset, model: &C, weighting: &Weighting) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let (err, _) = weighted_error_sums(data, model, weighting)?;
    Ok(err / data.len() as f64)
}

/// `m_beta / sum(w) * rber`, i.e. the weighted error fraction. Never exceeds 1.
pub fn normalized_rber<C: Classifier + ?Sized>(data: &Dataset, model: &C, weighting: &Weighting) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let (err, mass) = weighted_error_sums(data, model, weighting)?;
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    Ok(err / mass)
}

/// `rber / E_{D_beta}[w]`: the same risk normalized by the population
/// expected weight instead of its sample mean.
pub fn rber_over_expected<C: Classifier + ?Sized>(
    data: &Dataset,
    model: &C,
    weighting: &Weighting,
    expected_weight: f64,
) -> Result<f64> {
    if !(expected_weight > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    Ok(rber(data, model, weighting)? / expected_weight)
}

/// Plain error rate.
pub fn true_loss<C: Classifier + ?Sized>(data: &Dataset, model: &C) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let wrong = data.rows().iter().filter(|r| model.classify(r) != r.label).count();
    Ok(wrong as f64 / data.len() as f64)
}
