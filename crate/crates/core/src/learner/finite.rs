//! Exhaustive ERM over a finite class of threshold stumps.

use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::data::{Dataset, Row};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::reweight::Weighting;

/// Predicts `positive_above` when `x[feature] >= cutoff`, otherwise the opposite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub cutoff: f64,
    pub positive_above: bool,
}

impl Classifier for Stump {
    fn classify(&self, row: &Row) -> bool {
        (row.features[self.feature] >= self.cutoff) == self.positive_above
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteClass {
    pub hypotheses: Vec<Stump>,
}

impl FiniteClass {
    pub fn new(hypotheses: Vec<Stump>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::InvalidArgument("hypothesis class must be nonempty".into()));
        }
        Ok(FiniteClass { hypotheses })
    }

    /// `count` upward stumps on one feature with cutoffs evenly spaced over `[lo, hi]`.
    pub fn grid(feature: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        let step = if count > 1 { (hi - lo) / (count - 1) as f64 } else { 0.0 };
        Self::new(
            (0..count)
                .map(|j| Stump { feature, cutoff: lo + step * j as f64, positive_above: true })
                .collect(),
        )
    }

    /// `|H|` as used by the sample-size bounds.
    pub fn size(&self) -> usize {
        self.hypotheses.len()
    }
}

/// Normalized weighted 0-1 risk of every hypothesis, in class order.
pub fn class_losses(data: &Dataset, weighting: &Weighting, class: &FiniteClass, mode: Parallelism) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Some(h) = class.hypotheses.iter().find(|h| h.feature >= data.feature_dim()) {
        return Err(Error::DimensionMismatch { expected: data.feature_dim(), got: h.feature + 1 });
    }
    let weights = weighting.row_weights(data)?;
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    Ok(par::map_slice(&class.hypotheses, mode, |h| {
        let err: f64 = data
            .rows()
            .iter()
            .zip(&weights)
            .filter(|(r, _)| h.classify(r) != r.label)
            .map(|(_, w)| w)
            .sum();
        err / mass
    }))
}

/// Returns `(index, loss)` of the minimizer of the normalized weighted risk;
/// ties go to the lowest index.
pub fn erm_finite_class(data: &Dataset, weighting: &Weighting, class: &FiniteClass) -> Result<(usize, f64)> {
    erm_finite_class_with(data, weighting, class, Parallelism::Sequential)
}

pub fn erm_finite_class_with(
    data: &Dataset,
    weighting: &Weighting,
    class: &FiniteClass,
    mode: Parallelism,
) -> Result<(usize, f64)> {
    let losses = class_losses(data, weighting, class, mode)?;
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    Ok((best, losses[best]))
}
