use serde::{Deserialize, Serialize};

use super::{symmetric_eigen, FeatureMatrix, StatsError};

/// Principal components of a feature matrix.
///
/// `explained_variance` and `explained_ratio` cover the full spectrum (one
/// entry per input column); `components` and `scores` are truncated to the
/// requested number of components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    /// `components[c][j]`: loading of column `j` on component `c`.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// `scores[r][c]`: row `r` projected on component `c`.
    pub scores: Vec<Vec<f64>>,
    pub rank: usize,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Rows mapped back from scores into the original column space.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        self.scores
            .iter()
            .map(|s| {
                (0..self.columns.len())
                    .map(|j| {
                        self.mean[j]
                            + s.iter()
                                .zip(&self.components)
                                .map(|(sc, comp)| sc * comp[j])
                                .sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_ratio.iter().take(self.n_components()).sum()
    }
}

/// Sample covariance (divisor n − 1) of column-centred data.
pub(crate) fn covariance(values: &[Vec<f64>], mean: &[f64]) -> Vec<Vec<f64>> {
    let n = values.len();
    let p = mean.len();
    let mut cov = vec![vec![0.0; p]; p];
    for row in values {
        for i in 0..p {
            let di = row[i] - mean[i];
            for j in i..p {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Covariance PCA. Each component is oriented so that its largest-magnitude
/// loading is positive.
pub fn pca(m: &FeatureMatrix, n_pc: usize) -> Result<PcaResult, StatsError> {
    let n = m.n_rows();
    if n < 2 {
        return Err(StatsError::TooFewRows(n));
    }
    let p = m.n_cols();
    if p == 0 {
        return Err(StatsError::NoColumns);
    }
    let mean: Vec<f64> = (0..p).map(|c| m.column(c).sum::<f64>() / n as f64).collect();
    let cov = covariance(&m.values, &mean);
    let (values, mut vectors) = symmetric_eigen(&cov);

    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * p as f64 * 1e-12;
    let rank = values.iter().filter(|&&v| v > tol && v > 0.0).count();
    if n_pc == 0 || n_pc > rank {
        return Err(StatsError::RankDeficient {
            requested: n_pc,
            rank,
        });
    }

    for v in vectors.iter_mut() {
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let explained_variance: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = explained_variance.iter().sum();
    let explained_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let components: Vec<Vec<f64>> = vectors.into_iter().take(n_pc).collect();
    let scores = m
        .values
        .iter()
        .map(|row| {
            components
                .iter()
                .map(|comp| row.iter().zip(&mean).zip(comp).map(|((x, mu), w)| (x - mu) * w).sum())
                .collect()
        })
        .collect();

    Ok(PcaResult {
        row_ids: m.row_ids.clone(),
        columns: m.columns.clone(),
        mean,
        components,
        explained_variance,
        explained_ratio,
        scores,
        rank,
    })
}
