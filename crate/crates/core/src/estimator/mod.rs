//! Positive-rate estimates from the two batches, the inverse retention
//! estimates derived from them, and the sample-size bounds.
//!
//! Under the retention model only positives are dropped, so the odds of a
//! positive label inside a group shrink by exactly that group's retention:
//! `1/beta_i = p_i (1 - pbeta_i) / (pbeta_i (1 - p_i))`.

pub mod verify;

use serde::{Deserialize, Serialize};

use crate::bias_filter::BetaVector;
use crate::data::Dataset;
use crate::error::{Batch, Error, Result};

pub use verify::{mc_verify_lemma, CoverageReport, McSpec, LEMMA_IDS};

/// `beta0_hat` above this is reported as suspicious.
pub const BETA0_FLAG: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    pub p0_hat: f64,
    pub p_hat: Vec<f64>,
    pub pbeta0_hat: f64,
    pub pbeta_hat: Vec<f64>,
    /// Unbiased batch size.
    pub m: usize,
    /// Unbiased rows per group.
    pub m_i: Vec<usize>,
    /// Biased batch size.
    pub m_beta: usize,
    /// Biased rows per group.
    pub m_beta_i: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimates {
    pub beta0_hat: f64,
    pub inv_beta_hat: Vec<f64>,
    /// Set when `beta0_hat` exceeds [`BETA0_FLAG`].
    pub beta0_flagged: bool,
}

/// Overall positive rate, per-group positive rates and per-group counts.
pub(crate) struct BatchRates {
    pub overall: f64,
    pub groups: Vec<f64>,
    pub n: usize,
    pub counts: Vec<usize>,
}

pub(crate) fn batch_rates(data: &Dataset, batch: Batch) -> Result<BatchRates> {
    if data.is_empty() {
        return Err(Error::EmptyBatch(batch));
    }
    let k = data.k();
    let mut counts = vec![0usize; k];
    let mut pos = vec![0usize; k];
    let mut total_pos = 0usize;
    for row in data.rows() {
        total_pos += row.label as usize;
        for g in row.mask.groups() {
            counts[g] += 1;
            pos[g] += row.label as usize;
        }
    }
    if let Some(group) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyGroup { group, batch });
    }
    Ok(BatchRates {
        overall: total_pos as f64 / data.len() as f64,
        groups: pos.iter().zip(&counts).map(|(&p, &c)| p as f64 / c as f64).collect(),
        n: data.len(),
        counts,
    })
}

pub fn estimate_rates(unbiased: &Dataset, biased: &Dataset) -> Result<RateEstimates> {
    if unbiased.k() != biased.k() {
        return Err(Error::DimensionMismatch { expected: unbiased.k(), got: biased.k() });
    }
    let u = batch_rates(unbiased, Batch::Unbiased)?;
    let b = batch_rates(biased, Batch::Biased)?;
    Ok(RateEstimates {
        p0_hat: u.overall,
        p_hat: u.groups,
        pbeta0_hat: b.overall,
        pbeta_hat: b.groups,
        m: u.n,
        m_i: u.counts,
        m_beta: b.n,
        m_beta_i: b.counts,
    })
}

/// Closed-form inverse retention from an unbiased and a biased positive rate.
pub fn inverse_retention(p: f64, pbeta: f64) -> f64 {
    p * (1.0 - pbeta) / (pbeta * (1.0 - p))
}

fn interior(name: String, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::DegenerateRate { name, value })
    }
}

pub fn estimate_beta(r: &RateEstimates) -> Result<BetaEstimates> {
    if r.p_hat.len() != r.pbeta_hat.len() {
        return Err(Error::DimensionMismatch { expected: r.p_hat.len(), got: r.pbeta_hat.len() });
    }
    interior("p0_hat".into(), r.p0_hat)?;
    interior("pbeta0_hat".into(), r.pbeta0_hat)?;
    for (i, (&p, &pb)) in r.p_hat.iter().zip(&r.pbeta_hat).enumerate() {
        interior(format!("p_hat[{i}]"), p)?;
        interior(format!("pbeta_hat[{i}]"), pb)?;
    }
    let beta0_hat = r.pbeta0_hat / r.p0_hat;
    Ok(BetaEstimates {
        beta0_hat,
        inv_beta_hat: r.p_hat.iter().zip(&r.pbeta_hat).map(|(&p, &pb)| inverse_retention(p, pb)).collect(),
        beta0_flagged: beta0_hat > BETA0_FLAG,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeSpec {
    /// Target accuracy of the normalized reweighted risk.
    pub epsilon: f64,
    pub delta: f64,
    pub k: usize,
    /// Size of the hypothesis class.
    pub hclass_dim: usize,
    pub beta: BetaVector,
    pub p_groups: Vec<f64>,
    pub pbeta_groups: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub amplification: f64,
    pub m_beta: u64,
    pub m_beta_i: Vec<u64>,
    pub m_i: Vec<u64>,
}

/// `A = beta0^(k-2) * min_i beta_i^(1-k)`, the largest weight the bounds allow for.
pub fn amplification(beta: &BetaVector) -> f64 {
    let k = beta.k() as i32;
    let min = beta.betas.iter().copied().fold(f64::INFINITY, f64::min);
    beta.beta0.powi(k - 2) * min.powi(1 - k)
}

fn ceil_count(x: f64) -> u64 {
    // float-to-int casts saturate
    x.ceil() as u64
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {v} must lie in (0, 1]")))
    }
}

pub fn required_sample_sizes(s: &SampleSizeSpec) -> Result<SampleSizes> {
    if !(s.delta > 0.0 && s.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {} must lie in (0, 1)", s.delta)));
    }
    if s.k == 0 || s.beta.k() != s.k || s.p_groups.len() != s.k || s.pbeta_groups.len() != s.k {
        return Err(Error::DimensionMismatch { expected: s.k, got: s.beta.k() });
    }
    if s.hclass_dim == 0 {
        return Err(Error::InvalidArgument("hypothesis class must be nonempty".into()));
    }
    in_unit("beta0", s.beta.beta0)?;
    for (i, &b) in s.beta.betas.iter().enumerate() {
        in_unit(&format!("beta[{i}]"), b)?;
        in_unit(&format!("p[{i}]"), s.p_groups[i])?;
        in_unit(&format!("pbeta[{i}]"), s.pbeta_groups[i])?;
    }
    let a = amplification(&s.beta);
    // The lemmas run at eps / (11 A) and need that below 1/9.
    let eps = s.epsilon;
    if !(eps > 0.0 && eps < 1.0 && eps / (11.0 * a) < 1.0 / 9.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let k = s.k as f64;
    let h = s.hclass_dim as f64;
    let am1 = a - 1.0;
    let m_beta = 121.0 * am1.powi(4) / (2.0 * eps * eps) * (4.0 * h * (k + 1.0) / s.delta).ln();
    let group_ln = (2.0 * (2.0 * k + 2.0) / s.delta).ln();
    let per_group = |rate: f64| ceil_count(363.0 * am1 * am1 / (rate * eps * eps) * group_ln);
    Ok(SampleSizes {
        amplification: a,
        m_beta: ceil_count(m_beta),
        m_beta_i: s.pbeta_groups.iter().map(|&r| per_group(r)).collect(),
        m_i: s.p_groups.iter().map(|&r| per_group(r)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{GroupMask, Row};

    fn batch(rows: &[(u16, bool)]) -> Dataset {
        Dataset::with_ids(2, 0, rows.iter().map(|&(m, y)| Row::new(vec![], GroupMask(m), y)).collect()).unwrap()
    }

    #[test]
    fn counts_positive_rates() {
        let u = batch(&[(1, true), (1, false), (2, true), (3, true), (0, false), (2, false), (2, false), (1, false), (3, false), (0, true)]);
        let r = estimate_rates(&u, &u).unwrap();
        assert_eq!(r.p0_hat, 0.4);
        assert_eq!(r.m_i, vec![5, 5]);
        assert_eq!(r.p_hat, vec![0.4, 0.4]);
    }

    #[test]
    fn empty_group_and_batch() {
        let u = batch(&[(1, true), (2, false)]);
        let b = batch(&[(1, true), (1, false)]);
        assert!(matches!(estimate_rates(&u, &b), Err(Error::EmptyGroup { group: 1, batch: Batch::Biased })));
        let empty = Dataset::new(2, 0, vec![]).unwrap();
        assert!(matches!(estimate_rates(&empty, &b), Err(Error::EmptyBatch(Batch::Unbiased))));
    }

    fn rates(p: f64, pb: f64, p0: f64, pb0: f64) -> RateEstimates {
        RateEstimates {
            p0_hat: p0,
            p_hat: vec![p],
            pbeta0_hat: pb0,
            pbeta_hat: vec![pb],
            m: 1,
            m_i: vec![1],
            m_beta: 1,
            m_beta_i: vec![1],
        }
    }

    #[test]
    fn closed_form_examples() {
        let est = estimate_beta(&rates(0.5, 1.0 / 3.0, 0.4, 0.3)).unwrap();
        assert!((est.inv_beta_hat[0] - 2.0).abs() < 1e-15);
        assert!((est.beta0_hat - 0.75).abs() < 1e-15);
        assert!(!est.beta0_flagged);
        assert_eq!(estimate_beta(&rates(0.37, 0.37, 0.4, 0.3)).unwrap().inv_beta_hat[0], 1.0);
        assert!(estimate_beta(&rates(0.5, 0.3, 0.2, 0.3)).unwrap().beta0_flagged);
    }

    #[test]
    fn boundary_rates_are_errors() {
        for r in [rates(0.0, 0.3, 0.4, 0.3), rates(0.5, 1.0, 0.4, 0.3), rates(0.5, 0.3, 0.0, 0.3)] {
            assert!(matches!(estimate_beta(&r), Err(Error::DegenerateRate { .. })));
        }
    }

    #[test]
    fn duplicating_rows_changes_nothing() {
        let u = batch(&[(1, true), (1, false), (2, true), (3, false), (0, false), (2, false)]);
        let b = batch(&[(1, true), (3, false), (2, true), (2, false), (1, false)]);
        let twice = |d: &Dataset| {
            let idx: Vec<usize> = (0..d.len()).chain(0..d.len()).collect();
            d.select(&idx)
        };
        let once = estimate_beta(&estimate_rates(&u, &b).unwrap()).unwrap();
        let doubled = estimate_beta(&estimate_rates(&twice(&u), &twice(&b)).unwrap()).unwrap();
        assert_eq!(once, doubled);
    }

    fn size_spec(eps: f64, beta0: f64, betas: Vec<f64>, p: f64) -> SampleSizeSpec {
        let k = betas.len();
        SampleSizeSpec {
            epsilon: eps,
            delta: 0.1,
            k,
            hclass_dim: 10,
            beta: BetaVector::new(beta0, betas).unwrap(),
            p_groups: vec![p; k],
            pbeta_groups: vec![p; k],
        }
    }

    #[test]
    fn sample_size_examples() {
        let s = required_sample_sizes(&size_spec(0.3, 0.9, vec![0.8, 0.9], 0.5)).unwrap();
        assert!((s.amplification - 1.25).abs() < 1e-15);
        assert_eq!(s.m_beta, 19);
        assert_eq!(s.m_i, vec![2414, 2414]);
        let s = required_sample_sizes(&size_spec(0.05, 1.0, vec![1.0, 1.0], 0.5)).unwrap();
        assert_eq!((s.m_beta, s.m_i.clone(), s.m_beta_i.clone()), (0, vec![0, 0], vec![0, 0]));
    }

    #[test]
    fn sample_sizes_reject_bad_epsilon() {
        for eps in [0.0, -0.1, 1.0, 2.0] {
            assert!(matches!(
                required_sample_sizes(&size_spec(eps, 0.9, vec![0.8, 0.9], 0.5)),
                Err(Error::InvalidEpsilon(_))
            ));
        }
    }

    #[test]
    fn sample_sizes_monotone_on_grid() {
        let betas = [0.3, 0.5, 0.7, 0.9];
        let epss = [0.02, 0.05, 0.1, 0.3, 0.6];
        for &b1 in &betas {
            for w in epss.windows(2) {
                let lo = required_sample_sizes(&size_spec(w[0], 0.9, vec![b1, 0.6, 0.7], 0.4)).unwrap();
                let hi = required_sample_sizes(&size_spec(w[1], 0.9, vec![b1, 0.6, 0.7], 0.4)).unwrap();
                assert!(hi.m_beta <= lo.m_beta && hi.m_i <= lo.m_i && hi.m_beta_i <= lo.m_beta_i);
            }
            for w in betas.windows(2) {
                let lo = required_sample_sizes(&size_spec(0.1, 0.9, vec![w[0], b1, 0.9], 0.4)).unwrap();
                let hi = required_sample_sizes(&size_spec(0.1, 0.9, vec![w[1], b1, 0.9], 0.4)).unwrap();
                assert!(hi.m_beta <= lo.m_beta && hi.m_i <= lo.m_i && hi.m_beta_i <= lo.m_beta_i);
            }
        }
    }
}
