use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported number of groups; masks fit in a `u16`.
pub const MAX_GROUPS: usize = 16;

/// Set of groups a row belongs to, one bit per group (bit `i` is group `i`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupMask(pub u16);

impl GroupMask {
    pub const EMPTY: GroupMask = GroupMask(0);

    pub fn from_groups(groups: &[usize]) -> Self {
        GroupMask(groups.iter().fold(0u16, |m, &g| m | (1 << g)))
    }

    #[inline]
    pub fn contains(self, group: usize) -> bool {
        self.0 >> group & 1 == 1
    }

    /// |G(x)|
    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn groups(self) -> impl Iterator<Item = usize> {
        (0..MAX_GROUPS).filter(move |&g| self.contains(g))
    }

    /// True when no bit at or above `k` is set.
    pub fn fits(self, k: usize) -> bool {
        k >= MAX_GROUPS || self.0 >> k == 0
    }

    /// Every mask over `k` groups, in increasing numeric order.
    pub fn all(k: usize) -> impl Iterator<Item = GroupMask> {
        (0..1u32 << k).map(|m| GroupMask(m as u16))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub features: Vec<f64>,
    pub mask: GroupMask,
    pub label: bool,
    /// Provenance: index of the source row this one descends from.
    /// Synthetic rows created by oversampling carry [`Row::SYNTHETIC`].
    #[serde(default)]
    pub id: usize,
}

impl Row {
    pub const SYNTHETIC: usize = usize::MAX;

    pub fn new(features: Vec<f64>, mask: GroupMask, label: bool) -> Self {
        Row { features, mask, label, id: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    k: usize,
    feature_dim: usize,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(k: usize, feature_dim: usize, rows: Vec<Row>) -> Result<Self> {
        if k == 0 || k > MAX_GROUPS {
            return Err(Error::InvalidArgument(format!("group count {k} not in 1..={MAX_GROUPS}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if !row.mask.fits(k) {
                return Err(Error::InvalidArgument(format!(
                    "row {i}: mask {:#b} uses bits above k = {k}",
                    row.mask.0
                )));
            }
            if row.features.len() != feature_dim {
                return Err(Error::DimensionMismatch { expected: feature_dim, got: row.features.len() });
            }
        }
        Ok(Dataset { k, feature_dim, rows })
    }

    /// Builds a dataset and stamps each row's provenance id with its position.
    pub fn with_ids(k: usize, feature_dim: usize, mut rows: Vec<Row>) -> Result<Self> {
        for (i, row) in rows.iter_mut().enumerate() {
            row.id = i;
        }
        Self::new(k, feature_dim, rows)
    }

    pub fn empty_like(&self) -> Self {
        Dataset { k: self.k, feature_dim: self.feature_dim, rows: Vec::new() }
    }

    /// Same shape, different rows. Rows are assumed to come from a dataset
    /// of the same shape and are not re-validated.
    pub(crate) fn with_rows(&self, rows: Vec<Row>) -> Self {
        Dataset { k: self.k, feature_dim: self.feature_dim, rows }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label).count()
    }

    /// Rows at the given positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        self.with_rows(indices.iter().map(|&i| self.rows[i].clone()).collect())
    }

    /// Number of rows in each group.
    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for row in &self.rows {
            for g in row.mask.groups() {
                counts[g] += 1;
            }
        }
        counts
    }
}
