//! Pairwise dependence diagnostics between group-membership indicators:
//! Pearson correlation and the 2x2 chi-square independence test (df = 1, no
//! continuity correction). Undefined entries are `None`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::special::chi2_sf;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    #[default]
    All,
    /// Only rows with `y = 1`.
    Positives,
}

pub type Matrix = Vec<Vec<Option<f64>>>;

/// `[[n11, n10], [n01, n00]]`: rows index group `i` (in, out), columns group `j`.
pub type Table = [[u64; 2]; 2];

fn selected(data: &Dataset, condition: Condition) -> impl Iterator<Item = &crate::data::Row> {
    data.rows().iter().filter(move |r| condition == Condition::All || r.label)
}

fn check_k(data: &Dataset) -> Result<()> {
    if data.k() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 groups, got {}", data.k())));
    }
    Ok(())
}

/// Joint membership counts of groups `i` and `j`.
pub fn contingency(data: &Dataset, condition: Condition, i: usize, j: usize) -> Table {
    let mut t = [[0u64; 2]; 2];
    for r in selected(data, condition) {
        t[!r.mask.contains(i) as usize][!r.mask.contains(j) as usize] += 1;
    }
    t
}

/// Pearson correlation of two 0/1 indicators from their 2x2 table; `None`
/// when either indicator is constant.
pub fn phi(t: &Table) -> Option<f64> {
    let n = (t[0][0] + t[0][1] + t[1][0] + t[1][1]) as f64;
    let ri = (t[0][0] + t[0][1]) as f64;
    let cj = (t[0][0] + t[1][0]) as f64;
    let denom = ri * (n - ri) * cj * (n - cj);
    if denom <= 0.0 {
        return None;
    }
    Some((n * t[0][0] as f64 - ri * cj) / denom.sqrt())
}

#[allow(clippy::needless_range_loop)]
pub fn correlation_matrix(data: &Dataset, condition: Condition) -> Result<Matrix> {
    check_k(data)?;
    let k = data.k();
    let mut m = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = phi(&contingency(data, condition, i, j)).map(|r| if i == j { 1.0 } else { r.clamp(-1.0, 1.0) });
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Statistic `sum (O - E)^2 / E` and its upper-tail p-value with df = 1.
pub fn chi2_2x2(t: &Table) -> Result<(f64, f64)> {
    let n = (t[0][0] + t[0][1] + t[1][0] + t[1][1]) as f64;
    let rows = [(t[0][0] + t[0][1]) as f64, (t[1][0] + t[1][1]) as f64];
    let cols = [(t[0][0] + t[1][0]) as f64, (t[0][1] + t[1][1]) as f64];
    let mut stat = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let expected = rows[a] * cols[b] / n;
            if !(expected > 0.0) {
                return Err(Error::ZeroExpectedCell);
            }
            let d = t[a][b] as f64 - expected;
            stat += d * d / expected;
        }
    }
    Ok((stat, chi2_sf(stat, 1.0).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Matrix {
    pub statistic: Matrix,
    pub p_value: Matrix,
}

/// Chi-square test for every pair of groups. The diagonal is left undefined.
pub fn pairwise_chi2(data: &Dataset, condition: Condition) -> Result<Chi2Matrix> {
    check_k(data)?;
    let k = data.k();
    let mut statistic = vec![vec![None; k]; k];
    let mut p_value = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let (s, p) = chi2_2x2(&contingency(data, condition, i, j))?;
            statistic[i][j] = Some(s);
            statistic[j][i] = Some(s);
            p_value[i][j] = Some(p);
            p_value[j][i] = Some(p);
        }
    }
    Ok(Chi2Matrix { statistic, p_value })
}
