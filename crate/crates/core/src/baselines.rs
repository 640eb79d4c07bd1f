//! Resampling comparators. Each returns a dataset meant to be trained on
//! with uniform weights.
//!
//! Product-group cells are keyed by the full membership mask. The two
//! class-balancing baselines equalize the positive rows across the cells that
//! occur in the data, then resize the result to the size of the input batch.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;

use crate::data::{Dataset, GroupMask, Row};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const DEFAULT_SMOTE_K: usize = 5;

/// Uniform subsample of `target` rows without replacement.
pub fn downsample_unbiased(unbiased: &Dataset, target: usize, seed: u64) -> Result<Dataset> {
    if target == 0 {
        return Err(Error::InvalidArgument("downsample target must be at least 1".into()));
    }
    if target > unbiased.len() {
        return Err(Error::TargetTooLarge { target, available: unbiased.len() });
    }
    let mut rng = rng::stream(seed, "downsample_unbiased", 0);
    let picks = index::sample(&mut rng, unbiased.len(), target).into_vec();
    Ok(unbiased.select(&picks))
}

/// Positive row indices per mask, for every mask that occurs in the data.
fn positive_cells(data: &Dataset) -> BTreeMap<u16, Vec<usize>> {
    let mut cells: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, row) in data.rows().iter().enumerate() {
        let cell = cells.entry(row.mask.0).or_default();
        if row.label {
            cell.push(i);
        }
    }
    cells
}

/// Returns exactly `target` rows: a subsample without replacement when there
/// are too many, all rows plus draws with replacement when too few.
fn resize(rows: Vec<Row>, target: usize, rng: &mut Rng) -> Vec<Row> {
    use std::cmp::Ordering;
    match rows.len().cmp(&target) {
        Ordering::Equal => rows,
        Ordering::Greater => {
            let mut picks = index::sample(rng, rows.len(), target).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| rows[i].clone()).collect()
        }
        Ordering::Less => {
            let n = rows.len();
            let extra: Vec<Row> = (0..target - n).map(|_| rows[rng.random_range(0..n)].clone()).collect();
            let mut out = rows;
            out.extend(extra);
            out
        }
    }
}

/// Cuts every positive cell down to the smallest one, keeps all negatives,
/// then resizes to the input size.
pub fn random_undersample(data: &Dataset, seed: u64) -> Result<Dataset> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let cells = positive_cells(data);
    if let Some((&mask, _)) = cells.iter().find(|(_, rows)| rows.is_empty()) {
        return Err(Error::EmptyCell { mask });
    }
    let min = cells.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = rng::stream(seed, "random_undersample", 0);
    let mut keep = vec![false; data.len()];
    for (i, row) in data.rows().iter().enumerate() {
        keep[i] = !row.label;
    }
    for rows in cells.values() {
        for j in index::sample(&mut rng, rows.len(), min) {
            keep[rows[j]] = true;
        }
    }
    let reduced: Vec<Row> = data.rows().iter().zip(&keep).filter(|(_, &k)| k).map(|(r, _)| r.clone()).collect();
    Ok(data.with_rows(resize(reduced, data.len(), &mut rng)))
}

/// `x + u (neighbor - x)`.
pub fn smote_point(x: &[f64], neighbor: &[f64], u: f64) -> Vec<f64> {
    x.iter().zip(neighbor).map(|(a, b)| a + u * (b - a)).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Positions (within `cell`) of the `k` nearest other members of each member.
fn neighbors(data: &Dataset, cell: &[usize], k: usize) -> Vec<Vec<usize>> {
    let rows = data.rows();
    cell.iter()
        .enumerate()
        .map(|(a, &ia)| {
            let mut others: Vec<(f64, usize)> = cell
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &ib)| (squared_distance(&rows[ia].features, &rows[ib].features), b))
                .collect();
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            others.into_iter().take(k).map(|(_, b)| b).collect()
        })
        .collect()
}

/// Synthesizes positives inside each positive cell until all cells match
/// the largest one, then resizes the whole batch to the input size.
/// Synthetic rows carry the parent's mask and the id [`Row::SYNTHETIC`].
pub fn smote_lite(data: &Dataset, k_neighbors: usize, seed: u64) -> Result<Dataset> {
    smote_with_counts(data, k_neighbors, seed).map(|(d, _)| d)
}

/// [`smote_lite`] plus the per-cell positive counts reached before resizing.
pub fn smote_with_counts(data: &Dataset, k_neighbors: usize, seed: u64) -> Result<(Dataset, BTreeMap<u16, usize>)> {
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let cells = positive_cells(data);
    if let Some((&mask, rows)) = cells.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(Error::TooFewRowsForNeighbors { mask, rows: rows.len() });
    }
    let max = cells.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng::stream(seed, "smote_lite", 0);
    let mut out: Vec<Row> = data.rows().to_vec();
    let mut counts = BTreeMap::new();
    for (&mask, cell) in &cells {
        let need = max - cell.len();
        if need > 0 {
            let nn = neighbors(data, cell, k_neighbors);
            for _ in 0..need {
                let a = rng.random_range(0..cell.len());
                let b = nn[a][rng.random_range(0..nn[a].len())];
                let u: f64 = rng.random();
                let parent = &data.rows()[cell[a]];
                let features = smote_point(&parent.features, &data.rows()[cell[b]].features, u);
                out.push(Row { features, mask: GroupMask(mask), label: true, id: Row::SYNTHETIC });
            }
        }
        counts.insert(mask, max);
    }
    Ok((data.with_rows(resize(out, data.len(), &mut rng)), counts))
}
