//! Exact population-level quantities of a synthetic population and its
//! filtered counterpart, computed by summing over all `2^k` membership
//! patterns. These are the targets the sample estimates converge to.

use serde::Serialize;

use crate::bias_filter::{keep_probability, BetaVector, FilterMode};
use crate::data::GroupMask;
use crate::error::Result;
use crate::generator::PopulationSpec;
use crate::learner::Stump;
use crate::special::normal_cdf;

#[derive(Debug, Clone, Serialize)]
pub struct MaskCell {
    pub mask: GroupMask,
    /// `Pr[G(x) = I]`
    pub prob: f64,
    /// `Pr[y = 1 | G(x) = I]`
    pub positive_rate: f64,
    /// `Pr[keep | G(x) = I, y = 1]`
    pub keep: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationRates {
    pub k: usize,
    pub cells: Vec<MaskCell>,
    /// `Pr[y = 1]`
    pub p0: f64,
    /// `Pr[y = 1 | x in G_i]`
    pub p_groups: Vec<f64>,
    /// `Pr[y = 1 | kept]`
    pub pbeta0: f64,
    /// `Pr[y = 1 | kept, x in G_i]`
    pub pbeta_groups: Vec<f64>,
    /// `Pr[x in G_i | kept]`
    pub biased_membership: Vec<f64>,
    /// `Pr[keep | y = 1]`
    pub beta0: f64,
    /// `Pr[keep | x in G_i, y = 1]`
    pub group_retention: Vec<f64>,
    /// `E_{D_beta}[w]`, with `w` the exact inverse keep probability.
    pub expected_weight: f64,
    /// Largest value of `w` over the support.
    pub max_weight: f64,
}

impl PopulationRates {
    pub fn compute(spec: &PopulationSpec, beta: &BetaVector, mode: FilterMode) -> Result<Self> {
        let p0_param = spec.p0()?;
        let k = spec.k;
        let mut cells = Vec::with_capacity(1 << k);
        for mask in GroupMask::all(k) {
            cells.push(MaskCell {
                mask,
                prob: spec.mask_probability(mask),
                positive_rate: spec.label_probability(p0_param, mask),
                keep: keep_probability(mask, beta, mode)?,
            });
        }

        let pos = |c: &MaskCell| c.prob * c.positive_rate;
        let kept_pos = |c: &MaskCell| pos(c) * c.keep;
        let kept = |c: &MaskCell| kept_pos(c) + c.prob * (1.0 - c.positive_rate);

        let total_pos: f64 = cells.iter().map(pos).sum();
        let total_kept_pos: f64 = cells.iter().map(kept_pos).sum();
        let total_kept: f64 = cells.iter().map(kept).sum();

        let sum_in = |g: usize, f: &dyn Fn(&MaskCell) -> f64| -> f64 {
            cells.iter().filter(|c| c.mask.contains(g)).map(f).sum()
        };
        let mut p_groups = Vec::with_capacity(k);
        let mut pbeta_groups = Vec::with_capacity(k);
        let mut biased_membership = Vec::with_capacity(k);
        let mut group_retention = Vec::with_capacity(k);
        for g in 0..k {
            let member = sum_in(g, &|c| c.prob);
            let member_pos = sum_in(g, &pos);
            let member_kept_pos = sum_in(g, &kept_pos);
            let member_kept = sum_in(g, &kept);
            p_groups.push(member_pos / member);
            pbeta_groups.push(member_kept_pos / member_kept);
            biased_membership.push(member_kept / total_kept);
            group_retention.push(member_kept_pos / member_pos);
        }

        let max_weight = cells
            .iter()
            .filter(|c| c.prob > 0.0)
            .map(|c| if c.keep > 0.0 { 1.0 / c.keep } else { f64::INFINITY })
            .fold(1.0, f64::max);

        Ok(PopulationRates {
            k,
            p0: total_pos,
            p_groups,
            pbeta0: total_kept_pos / total_kept,
            pbeta_groups,
            biased_membership,
            beta0: total_kept_pos / total_pos,
            group_retention,
            // E_{D_beta}[1/keep] = sum p_D(x,y) / Pr[kept]
            expected_weight: 1.0 / total_kept,
            max_weight,
            cells,
        })
    }

    /// True inverse group retention `1 / Pr[keep | x in G_i, y = 1]`.
    pub fn inverse_group_retention(&self) -> Vec<f64> {
        self.group_retention.iter().map(|r| 1.0 / r).collect()
    }
}

/// Exact 0-1 risk of a stump on the unfiltered population with overall
/// positive rate `p0`. Features depend on the label only.
pub fn stump_loss(spec: &PopulationSpec, p0: f64, stump: &Stump) -> f64 {
    let pos = &spec.feature_model.positive;
    let neg = &spec.feature_model.negative;
    let f = stump.feature;
    let up_pos = gaussian_upper(pos.mean[f], pos.variance, stump.cutoff);
    let up_neg = gaussian_upper(neg.mean[f], neg.variance, stump.cutoff);
    if stump.positive_above {
        p0 * (1.0 - up_pos) + (1.0 - p0) * up_neg
    } else {
        p0 * up_pos + (1.0 - p0) * (1.0 - up_neg)
    }
}

/// Probability that `x_j >= cutoff` when `x_j ~ N(mean, variance)`.
pub fn gaussian_upper(mean: f64, variance: f64, cutoff: f64) -> f64 {
    1.0 - normal_cdf((cutoff - mean) / variance.sqrt())
}
