//! Test-split metrics. Undefined quantities are `None`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learner::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Accuracy over the rows of each group; `None` for groups with no test rows.
    pub group_accuracy: Vec<Option<f64>>,
    /// `None` when nothing is predicted positive.
    pub precision: Option<f64>,
    /// `None` when the test split has no positives.
    pub recall: Option<f64>,
    /// `2TP / (2TP + FP + FN)`; `None` when that denominator is zero.
    pub f1: Option<f64>,
}

pub const METRIC_NAMES: &[&str] = &["accuracy", "precision", "recall", "f1"];

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn evaluate_metrics<C: Classifier + ?Sized>(model: &C, test: &Dataset) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    let k = test.k();
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    let mut group_rows = vec![0usize; k];
    let mut group_correct = vec![0usize; k];
    for row in test.rows() {
        let pred = model.classify(row);
        let hit = pred == row.label;
        correct += hit as usize;
        match (pred, row.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        for g in row.mask.groups() {
            group_rows[g] += 1;
            group_correct[g] += hit as usize;
        }
    }
    Ok(Metrics {
        accuracy: correct as f64 / test.len() as f64,
        group_accuracy: group_correct.iter().zip(&group_rows).map(|(&c, &n)| ratio(c, n)).collect(),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
    })
}
