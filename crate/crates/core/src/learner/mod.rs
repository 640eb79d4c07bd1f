//! Empirical risk minimization on the weighted biased batch.
//!
//! The practical path fits a logistic regression by full-batch gradient
//! descent on the weight-normalized cross-entropy. The exact path
//! ([`finite`]) minimizes the normalized 0-1 risk over an explicit class of
//! threshold stumps.

pub mod finite;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Row};
use crate::error::{Error, Result};
use crate::rng;

pub use finite::{erm_finite_class, FiniteClass, Stump};

/// Anything that maps a row to a predicted label.
pub trait Classifier {
    fn classify(&self, row: &Row) -> bool;
}

impl<F: Fn(&Row) -> bool> Classifier for F {
    fn classify(&self, row: &Row) -> bool {
        self(row)
    }
}

/// Missing keys in a JSON config take their [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Standard deviation of the random initial weights; 0 starts at zero.
    pub init_scale: f64,
    /// Append group-membership indicators to the numeric features.
    pub group_features: bool,
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1.0, epochs: 500, l2: 0.0, seed: 0, init_scale: 0.0, group_features: true, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub threshold: f64,
    /// When set, the last `k` weights apply to group-membership indicators.
    #[serde(default)]
    pub group_features: bool,
    #[serde(default)]
    pub k: usize,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LinearModel {
    pub fn zeros(feature_dim: usize, k: usize, group_features: bool) -> Self {
        let p = feature_dim + if group_features { k } else { 0 };
        LinearModel { weights: vec![0.0; p], intercept: 0.0, threshold: 0.5, group_features, k }
    }

    /// Width of the design vector this model expects.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn feature_dim(&self) -> usize {
        self.weights.len() - if self.group_features { self.k } else { 0 }
    }

    /// Design vector of a row: features, then group indicators if enabled.
    pub fn design(&self, row: &Row) -> Vec<f64> {
        let mut x = row.features.clone();
        if self.group_features {
            x.extend((0..self.k).map(|g| if row.mask.contains(g) { 1.0 } else { 0.0 }));
        }
        x
    }

    fn logit_row(&self, row: &Row) -> f64 {
        let d = self.feature_dim();
        let mut z = self.intercept;
        for (w, x) in self.weights[..d].iter().zip(&row.features) {
            z += w * x;
        }
        if self.group_features {
            for g in row.mask.groups() {
                z += self.weights[d + g];
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let z = self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        Ok(sigmoid(z))
    }

    /// `sigmoid(w . x + b) >= threshold`.
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        Ok(self.predict_proba(x)? >= self.threshold)
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

impl Classifier for LinearModel {
    fn classify(&self, row: &Row) -> bool {
        sigmoid(self.logit_row(row)) >= self.threshold
    }
}

fn check_training_data(data: &Dataset, weights: &[f64]) -> Result<()> {
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: weights.len() });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("row weight {w} must be finite and nonnegative")));
    }
    if data.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows to train".into()));
    }
    let (mut pos, mut neg) = (0.0, 0.0);
    for (row, &w) in data.rows().iter().zip(weights) {
        if row.label {
            pos += w;
        } else {
            neg += w;
        }
    }
    if !(pos > 0.0 && neg > 0.0) {
        return Err(Error::SingleClassData);
    }
    Ok(())
}

fn check_model_shape(model: &LinearModel, data: &Dataset) -> Result<()> {
    let expected = data.feature_dim() + if model.group_features { data.k() } else { 0 };
    if model.dim() != expected || (model.group_features && model.k != data.k()) {
        return Err(Error::DimensionMismatch { expected, got: model.dim() });
    }
    Ok(())
}

/// `sum_r w_r * CE_r / sum_r w_r + l2/2 * |weights|^2` (intercept unpenalized).
pub fn weighted_objective(model: &LinearModel, data: &Dataset, weights: &[f64], l2: f64) -> Result<f64> {
    check_model_shape(model, data)?;
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: weights.len() });
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    let mut total = 0.0;
    for (row, &w) in data.rows().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let z = model.logit_row(row);
        // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
        total += w * if row.label { softplus(-z) } else { softplus(z) };
    }
    let penalty = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    Ok(total / mass + penalty)
}

/// Exact gradient of [`weighted_objective`]; the intercept component is last.
pub fn weighted_gradient(model: &LinearModel, data: &Dataset, weights: &[f64], l2: f64) -> Result<Vec<f64>> {
    check_model_shape(model, data)?;
    if weights.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: weights.len() });
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroWeightMass);
    }
    let p = model.dim();
    let d = model.feature_dim();
    let mut grad = vec![0.0; p + 1];
    for (row, &w) in data.rows().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let residual = w * (sigmoid(model.logit_row(row)) - if row.label { 1.0 } else { 0.0 });
        for (g, x) in grad[..d].iter_mut().zip(&row.features) {
            *g += residual * x;
        }
        if model.group_features {
            for grp in row.mask.groups() {
                grad[d + grp] += residual;
            }
        }
        grad[p] += residual;
    }
    for (j, g) in grad.iter_mut().enumerate() {
        *g /= mass;
        if j < p {
            *g += l2 * model.weights[j];
        }
    }
    Ok(grad)
}

/// Full-batch gradient descent on the normalized weighted cross-entropy.
pub fn train_weighted_logistic(data: &Dataset, weights: &[f64], cfg: &TrainConfig) -> Result<LinearModel> {
    check_training_data(data, weights)?;
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {} must be positive", cfg.lr)));
    }
    let mut model = LinearModel::zeros(data.feature_dim(), data.k(), cfg.group_features);
    if cfg.init_scale > 0.0 {
        let mut rng = rng::stream(cfg.seed, "logistic_init", 0);
        for w in &mut model.weights {
            *w = cfg.init_scale * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    let p = model.dim();
    for _ in 0..cfg.epochs {
        let grad = weighted_gradient(&model, data, weights, cfg.l2)?;
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < cfg.tol {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad[..p]) {
            *w -= cfg.lr * g;
        }
        model.intercept -= cfg.lr * grad[p];
    }
    if !model.is_finite() {
        return Err(Error::InvalidArgument("training diverged; lower the learning rate".into()));
    }
    Ok(model)
}
