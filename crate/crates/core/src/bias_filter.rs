//! Retention model for positive examples and the filter producing the
//! biased batch. Negatives are always kept.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupMask};
use crate::error::{Error, Result};
use crate::fixed_point;
use crate::rng;

/// Tolerance for retention products computed in floating point.
const ONE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaVector {
    /// Population retention rate of positives.
    pub beta0: f64,
    /// Per-group retention rates.
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Exact intersectional model: keep a positive with `beta0^(1-|I|) * prod beta_i`,
    /// including group-free positives at rate `beta0`.
    Theoretical,
    /// Experiment protocol: keep a positive with `prod_{i in I} beta_i`;
    /// group-free positives are always kept.
    #[default]
    Empirical,
}

impl BetaVector {
    pub fn new(beta0: f64, betas: Vec<f64>) -> Result<Self> {
        let b = BetaVector { beta0, betas };
        b.check(false)?;
        Ok(b)
    }

    /// Builds the vector for the theoretical model, solving `beta0` from the
    /// positive-conditional membership rates.
    pub fn theoretical(g_pos: &[f64], betas: Vec<f64>) -> Result<Self> {
        let beta0 = solve_beta0(g_pos, &betas)?;
        BetaVector::new(beta0, betas)
    }

    /// Retention rates for the empirical protocol; zeros allowed. `beta0` is
    /// not used by the filter in that mode and is set to 1.
    pub fn empirical(betas: Vec<f64>) -> Result<Self> {
        let b = BetaVector { beta0: 1.0, betas };
        b.check(true)?;
        Ok(b)
    }

    pub fn k(&self) -> usize {
        self.betas.len()
    }

    pub fn is_identity(&self) -> bool {
        self.beta0 == 1.0 && self.betas.iter().all(|&b| b == 1.0)
    }

    fn check(&self, allow_zero: bool) -> Result<()> {
        let ok = |b: f64| b <= 1.0 && (b > 0.0 || (allow_zero && b == 0.0));
        if !ok(self.beta0) || self.beta0 == 0.0 {
            return Err(Error::InvalidArgument(format!("beta0 = {} not in (0,1]", self.beta0)));
        }
        if let Some((i, b)) = self.betas.iter().enumerate().find(|(_, &b)| !ok(b)) {
            return Err(Error::InvalidArgument(format!("beta[{i}] = {b} not in (0,1]")));
        }
        Ok(())
    }
}

/// `Pr[keep | G(x) = I, y = 1] = beta0^(1-|I|) * prod_{i in I} beta_i`.
pub fn retention_probability(mask: GroupMask, beta: &BetaVector) -> Result<f64> {
    if !mask.fits(beta.k()) {
        return Err(Error::InvalidArgument(format!("mask {:#b} exceeds k = {}", mask.0, beta.k())));
    }
    let value = mask.groups().fold(beta.beta0, |acc, i| acc * beta.betas[i] / beta.beta0);
    if value > 1.0 + ONE_TOL {
        return Err(Error::ModelViolation { mask: mask.0, value });
    }
    Ok(value.min(1.0))
}

/// Keep probability of a positive row under the chosen mode.
pub fn keep_probability(mask: GroupMask, beta: &BetaVector, mode: FilterMode) -> Result<f64> {
    match mode {
        FilterMode::Theoretical => retention_probability(mask, beta),
        FilterMode::Empirical => Ok(mask.groups().map(|i| beta.betas[i]).product()),
    }
}

/// Solves `1 = prod_i (1 - g_i + g_i * beta_i / beta0)` for `beta0`, where
/// `g_i = Pr[x in G_i | y = 1]`.
pub fn solve_beta0(g_pos: &[f64], betas: &[f64]) -> Result<f64> {
    if g_pos.len() != betas.len() || g_pos.is_empty() {
        return Err(Error::InvalidArgument("g_pos and betas must be nonempty and equally long".into()));
    }
    if !g_pos.iter().all(|&g| g > 0.0 && g < 1.0) {
        return Err(Error::InvalidArgument("g_pos must lie in (0,1)".into()));
    }
    if !betas.iter().all(|&b| b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidArgument("betas must lie in (0,1]".into()));
    }
    fixed_point::solve(g_pos, betas)
}

/// Drops positives per the retention model. Row order is preserved and the
/// keep decision for row `j` depends only on `(seed, j)`.
pub fn apply_filter(data: &Dataset, beta: &BetaVector, mode: FilterMode, seed: u64) -> Result<Dataset> {
    if data.k() != beta.k() {
        return Err(Error::DimensionMismatch { expected: data.k(), got: beta.k() });
    }
    if mode == FilterMode::Theoretical {
        beta.check(false)?;
    }
    // Lookup per mask keeps the per-row cost flat and surfaces model
    // violations before any row is touched.
    let mut table = std::collections::HashMap::new();
    for row in data.rows().iter().filter(|r| r.label) {
        if let std::collections::hash_map::Entry::Vacant(e) = table.entry(row.mask) {
            e.insert(keep_probability(row.mask, beta, mode)?);
        }
    }
    let filter_seed = rng::derive_seed(seed, "apply_filter", 0);
    let rows = data
        .rows()
        .iter()
        .enumerate()
        .filter(|(j, row)| !row.label || rng::unit_uniform(filter_seed, *j as u64) < table[&row.mask])
        .map(|(_, row)| row.clone())
        .collect();
    Ok(data.with_rows(rows))
}
