//! Feature matrices, standardization, PCA and clustering.

mod eigen;
mod hcluster;
mod kmeans;
mod pca;

pub use eigen::symmetric_eigen;
pub use hcluster::{cut_dendrogram, hcluster, hcluster_distances, Dendrogram, Merge};
pub use kmeans::{kmeans, KMeansResult, MAX_LLOYD_ITERATIONS};
pub use pca::{pca, PcaResult};

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value at row `{row}`, column `{column}`")]
    NonFinite { row: String, column: String },
    #[error("duplicate row id `{0}`")]
    DuplicateRow(String),
    #[error("requested {requested} components but rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("k = {k} invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("no columns left to analyse")]
    NoColumns,
    #[error("distance matrix is not square, symmetric and finite")]
    BadDistances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
}

/// Benchmarks × metrics matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Filled by [`standardize`]: raw mean and population standard deviation
    /// of each retained column.
    pub column_stats: Vec<ColumnStats>,
    pub dropped_columns: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        row_ids: Vec<String>,
        columns: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, StatsError> {
        let mut seen = BTreeSet::new();
        for id in &row_ids {
            if !seen.insert(id) {
                return Err(StatsError::DuplicateRow(id.clone()));
            }
        }
        if row_ids.len() != values.len() {
            return Err(StatsError::RaggedRow {
                row: values.len(),
                got: values.len(),
                expected: row_ids.len(),
            });
        }
        for (r, row) in values.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(StatsError::RaggedRow {
                    row: r,
                    got: row.len(),
                    expected: columns.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite {
                    row: row_ids[r].clone(),
                    column: columns[c].clone(),
                });
            }
        }
        Ok(FeatureMatrix {
            row_ids,
            columns,
            values,
            column_stats: Vec::new(),
            dropped_columns: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |r| r[c])
    }
}

/// Z-scores every column with the population standard deviation; columns
/// with zero variance are dropped and listed in `dropped_columns`.
pub fn standardize(raw: &FeatureMatrix) -> Result<FeatureMatrix, StatsError> {
    let n = raw.n_rows();
    if n < 2 {
        return Err(StatsError::TooFewRows(n));
    }
    let mut keep = Vec::new();
    let mut stats = Vec::new();
    let mut dropped = raw.dropped_columns.clone();
    for (c, name) in raw.columns.iter().enumerate() {
        let mean = raw.column(c).sum::<f64>() / n as f64;
        let var = raw.column(c).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let scale = raw.column(c).fold(0.0_f64, |m, v| m.max(v.abs()));
        if sd <= 1e-12 * scale || sd == 0.0 {
            warn!("dropping zero-variance column `{name}`");
            dropped.push(name.clone());
            continue;
        }
        keep.push(c);
        stats.push(ColumnStats {
            name: name.clone(),
            mean,
            std_dev: sd,
        });
    }
    let values = raw
        .values
        .iter()
        .map(|row| {
            keep.iter()
                .zip(&stats)
                .map(|(&c, s)| (row[c] - s.mean) / s.std_dev)
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        row_ids: raw.row_ids.clone(),
        columns: stats.iter().map(|s| s.name.clone()).collect(),
        values,
        column_stats: stats,
        dropped_columns: dropped,
    })
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSource {
    Kmeans,
    Hierarchical,
    Ensemble,
}

/// Hard cluster assignment over a set of benchmarks. Cluster indices are
/// canonical: numbered by first appearance in `ids` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionLabeling {
    pub source: PartitionSource,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl PartitionLabeling {
    pub fn new(source: PartitionSource, ids: Vec<String>, raw_labels: &[usize]) -> Self {
        assert_eq!(ids.len(), raw_labels.len(), "one label per id");
        let mut remap = BTreeMap::new();
        let labels = raw_labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        PartitionLabeling {
            source,
            ids,
            labels,
            k: remap.len(),
        }
    }

    /// Builds a labeling from explicit groups, e.g. `[["BN","HW"],["SAD"]]`.
    pub fn from_groups<S: AsRef<str>>(source: PartitionSource, groups: &[Vec<S>]) -> Self {
        let mut ids = Vec::new();
        let mut raw = Vec::new();
        for (g, members) in groups.iter().enumerate() {
            for m in members {
                ids.push(m.as_ref().to_string());
                raw.push(g);
            }
        }
        Self::new(source, ids, &raw)
    }

    pub fn label_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).map(|i| self.labels[i])
    }

    /// Labels reordered to follow `order`; `None` if the id sets differ.
    pub fn aligned(&self, order: &[String]) -> Option<Vec<usize>> {
        if order.len() != self.ids.len() {
            return None;
        }
        let index: BTreeMap<&str, usize> = self
            .ids
            .iter()
            .zip(&self.labels)
            .map(|(id, l)| (id.as_str(), *l))
            .collect();
        order.iter().map(|id| index.get(id.as_str()).copied()).collect()
    }

    /// Same labeling, relabelled canonically against a new id order.
    pub fn reordered(&self, order: &[String]) -> Option<Self> {
        let labels = self.aligned(order)?;
        Some(Self::new(self.source, order.to_vec(), &labels))
    }

    pub fn clusters(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, &l) in self.ids.iter().zip(&self.labels) {
            out[l].push(id.clone());
        }
        out
    }

    /// True when both labelings group the same ids identically.
    pub fn same_grouping(&self, other: &PartitionLabeling) -> bool {
        match other.reordered(&self.ids) {
            Some(o) => o.labels == PartitionLabeling::new(self.source, self.ids.clone(), &self.labels).labels,
            None => false,
        }
    }
}
