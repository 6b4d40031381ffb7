//! Weighted cluster ensembles: co-association consensus over characteristic
//! and power partitions, plus the affinity database used to pick workloads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statkit::{
    cut_dendrogram, euclidean, hcluster_distances, PartitionLabeling, PartitionSource, PcaResult,
    StatsError,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("partitions cover different benchmark sets")]
    IdMismatch,
    #[error("no partitions supplied")]
    EmptyInput,
    #[error("weights sum to zero")]
    WeightSumZero,
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("{partitions} partitions but {weights} weights")]
    WeightCount { partitions: usize, weights: usize },
    #[error("invalid affinity coefficients ({0}, {1})")]
    InvalidAffinity(f64, f64),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn contingency(p: &PartitionLabeling, q: &PartitionLabeling) -> Result<Vec<Vec<f64>>, EnsembleError> {
    let ql = q.aligned(&p.ids).ok_or(EnsembleError::IdMismatch)?;
    let kq = ql.iter().max().map_or(0, |m| m + 1);
    let kp = p.labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; kq]; kp];
    for (&a, &b) in p.labels.iter().zip(&ql) {
        table[a][b] += 1.0;
    }
    Ok(table)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let pr = c / n;
            -pr * pr.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(p;q) / sqrt(H(p)·H(q))`.
///
/// Two single-cluster labelings score 1; a single-cluster labeling against
/// any other scores 0.
pub fn nmi(p: &PartitionLabeling, q: &PartitionLabeling) -> Result<f64, EnsembleError> {
    let table = contingency(p, q)?;
    let n = p.ids.len() as f64;
    if n == 0.0 {
        return Ok(1.0);
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table.first().map_or(0, Vec::len))
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let hp = entropy(rows.iter().copied(), n);
    let hq = entropy(cols.iter().copied(), n);
    if hp == 0.0 && hq == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || hq == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0.0 {
                mi += c / n * (n * c / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok((mi / (hp * hq).sqrt()).clamp(0.0, 1.0))
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert–Arabie).
pub fn adjusted_rand_index(p: &PartitionLabeling, q: &PartitionLabeling) -> Result<f64, EnsembleError> {
    let table = contingency(p, q)?;
    let n = p.ids.len() as f64;
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let a: f64 = table.iter().map(|r| comb2(r.iter().sum())).sum();
    let b: f64 = (0..table.first().map_or(0, Vec::len))
        .map(|j| comb2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = a * b / comb2(n);
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(if p.same_grouping(q) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Pairwise weighted co-clustering frequency, rows in lexical id order so
/// that consensus ties resolve independently of input row order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoassocMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub weights_used: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub labeling: PartitionLabeling,
    pub coassoc: CoassocMatrix,
    /// Mean NMI between the consensus and each input partition.
    pub quality: f64,
}

// Co-association values are snapped to this grid so that weightings equal in
// exact arithmetic (e.g. scaled by a constant) produce identical matrices.
const COASSOC_GRID: f64 = 1e12;

pub fn coassociation(
    partitions: &[PartitionLabeling],
    weights: &[f64],
) -> Result<CoassocMatrix, EnsembleError> {
    let first = partitions.first().ok_or(EnsembleError::EmptyInput)?;
    if partitions.len() != weights.len() {
        return Err(EnsembleError::WeightCount {
            partitions: partitions.len(),
            weights: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(EnsembleError::InvalidWeight(w));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(EnsembleError::WeightSumZero);
    }
    let mut ids = first.ids.clone();
    ids.sort();
    let aligned: Vec<Vec<usize>> = partitions
        .iter()
        .map(|p| p.aligned(&ids).ok_or(EnsembleError::IdMismatch))
        .collect::<Result<_, _>>()?;
    let n = ids.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = 1.0;
        for j in (i + 1)..n {
            let agree: f64 = aligned
                .iter()
                .zip(weights)
                .filter(|(l, _)| l[i] == l[j])
                .map(|(_, w)| w)
                .sum();
            let v = ((agree / total) * COASSOC_GRID).round() / COASSOC_GRID;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(CoassocMatrix {
        ids,
        values,
        weights_used: weights.to_vec(),
    })
}

/// Co-association consensus: average-linkage clustering on `1 − coassoc`,
/// cut into `k` clusters.
pub fn weighted_consensus(
    partitions: &[PartitionLabeling],
    weights: &[f64],
    k: usize,
) -> Result<ConsensusResult, EnsembleError> {
    let coassoc = coassociation(partitions, weights)?;
    let dist: Vec<Vec<f64>> = coassoc
        .values
        .iter()
        .map(|r| r.iter().map(|v| 1.0 - v).collect())
        .collect();
    let labeling = if coassoc.ids.len() == 1 {
        if k != 1 {
            return Err(StatsError::InvalidK { k, n: 1 }.into());
        }
        PartitionLabeling::new(PartitionSource::Ensemble, coassoc.ids.clone(), &[0])
    } else {
        let tree = hcluster_distances(&coassoc.ids, &dist)?;
        let mut cut = cut_dendrogram(&tree, k)?;
        cut.source = PartitionSource::Ensemble;
        cut
    };
    let quality = partitions
        .iter()
        .map(|p| nmi(&labeling, p))
        .sum::<Result<f64, _>>()?
        / partitions.len() as f64;
    Ok(ConsensusResult {
        labeling,
        coassoc,
        quality,
    })
}

/// Partitions feeding the three-stage ensemble. `power_km[g]` and
/// `power_hc[g]` belong to device `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleInputs {
    pub char_km: PartitionLabeling,
    pub char_hc: PartitionLabeling,
    pub power_km: Vec<PartitionLabeling>,
    pub power_hc: Vec<PartitionLabeling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStages {
    /// `[technique][device]`, techniques ordered kmeans, hierarchical.
    pub per_device: Vec<Vec<ConsensusResult>>,
    pub per_technique: Vec<ConsensusResult>,
    pub final_consensus: ConsensusResult,
}

/// Three-stage ensemble: characteristics + power per (technique, device),
/// then across devices per technique, then across techniques.
pub fn ensemble_pipeline(
    inputs: &EnsembleInputs,
    w_char: f64,
    w_power: f64,
    k: usize,
) -> Result<ConsensusResult, EnsembleError> {
    Ok(ensemble_stages(inputs, w_char, w_power, k)?.final_consensus)
}

pub fn ensemble_stages(
    inputs: &EnsembleInputs,
    w_char: f64,
    w_power: f64,
    k: usize,
) -> Result<EnsembleStages, EnsembleError> {
    if inputs.power_km.is_empty() || inputs.power_km.len() != inputs.power_hc.len() {
        return Err(EnsembleError::EmptyInput);
    }
    let tracks = [
        (&inputs.char_km, &inputs.power_km),
        (&inputs.char_hc, &inputs.power_hc),
    ];
    let mut per_device = Vec::new();
    let mut per_technique = Vec::new();
    for (char_part, power_parts) in tracks {
        let stage1: Vec<ConsensusResult> = power_parts
            .iter()
            .map(|pp| weighted_consensus(&[char_part.clone(), pp.clone()], &[w_char, w_power], k))
            .collect::<Result<_, _>>()?;
        let labelings: Vec<PartitionLabeling> = stage1.iter().map(|c| c.labeling.clone()).collect();
        per_technique.push(weighted_consensus(&labelings, &vec![1.0; labelings.len()], k)?);
        per_device.push(stage1);
    }
    let final_consensus = weighted_consensus(
        &[per_technique[0].labeling.clone(), per_technique[1].labeling.clone()],
        &[1.0, 1.0],
        k,
    )?;
    Ok(EnsembleStages {
        per_device,
        per_technique,
        final_consensus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatabaseParams {
    pub coassoc_weight: f64,
    pub geometry_weight: f64,
}

impl Default for DatabaseParams {
    fn default() -> Self {
        DatabaseParams {
            coassoc_weight: 0.6,
            geometry_weight: 0.4,
        }
    }
}

/// Benchmarks with their consensus clusters, pairwise affinities and
/// relation scores. Serialized as the workload-database document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDatabase {
    pub benchmarks: Vec<String>,
    pub consensus_labels: BTreeMap<String, usize>,
    pub coassoc: Vec<Vec<f64>>,
    pub affinity: Vec<Vec<f64>>,
    pub relation_scores: BTreeMap<String, f64>,
    pub params: DatabaseParams,
    pub consensus_quality: f64,
    /// Retained principal-component coordinates, row-aligned with `benchmarks`.
    pub pca_scores: Vec<Vec<f64>>,
}

impl WorkloadDatabase {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.benchmarks.iter().position(|b| b == id)
    }

    pub fn label(&self, i: usize) -> usize {
        self.consensus_labels[&self.benchmarks[i]]
    }

    pub fn pca_distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.pca_scores[i], &self.pca_scores[j])
    }

    pub fn n_clusters(&self) -> usize {
        self.consensus_labels.values().max().map_or(0, |m| m + 1)
    }
}

/// Affinity = `coassoc_weight · coassoc + geometry_weight · (1 − d / d_max)`
/// with `d` the Euclidean distance in retained-PC space. The two weights are
/// normalized to sum to one.
pub fn build_database(
    consensus: &ConsensusResult,
    pca: &PcaResult,
    params: DatabaseParams,
) -> Result<WorkloadDatabase, EnsembleError> {
    let (a, b) = (params.coassoc_weight, params.geometry_weight);
    if !(a >= 0.0 && b >= 0.0 && a + b > 0.0 && (a + b).is_finite()) {
        return Err(EnsembleError::InvalidAffinity(a, b));
    }
    let (wa, wg) = (a / (a + b), b / (a + b));

    let ids = &consensus.coassoc.ids;
    let labels = consensus.labeling.aligned(ids).ok_or(EnsembleError::IdMismatch)?;
    if pca.row_ids.len() != ids.len() {
        return Err(EnsembleError::IdMismatch);
    }
    let scores: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            pca.row_ids
                .iter()
                .position(|r| r == id)
                .map(|i| pca.scores[i].clone())
                .ok_or(EnsembleError::IdMismatch)
        })
        .collect::<Result<_, _>>()?;

    let n = ids.len();
    let dist: Vec<Vec<f64>> = scores
        .iter()
        .map(|x| scores.iter().map(|y| euclidean(x, y)).collect())
        .collect();
    let dmax = dist.iter().flatten().cloned().fold(0.0, f64::max);
    let mut affinity = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let geometry = if dmax > 0.0 { 1.0 - dist[i][j] / dmax } else { 1.0 };
            let v = (wa * consensus.coassoc.values[i][j] + wg * geometry).clamp(0.0, 1.0);
            affinity[i][j] = v;
            affinity[j][i] = v;
        }
    }

    let relation_scores = (0..n)
        .map(|i| {
            let mates: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            let score = if mates.is_empty() {
                1.0
            } else {
                mates.iter().map(|&j| affinity[i][j]).sum::<f64>() / mates.len() as f64
            };
            (ids[i].clone(), score)
        })
        .collect();

    Ok(WorkloadDatabase {
        benchmarks: ids.clone(),
        consensus_labels: ids.iter().cloned().zip(labels).collect(),
        coassoc: consensus.coassoc.values.clone(),
        affinity,
        relation_scores,
        params,
        consensus_quality: consensus.quality,
        pca_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(groups: &[&[&str]]) -> PartitionLabeling {
        let g: Vec<Vec<&str>> = groups.iter().map(|x| x.to_vec()).collect();
        PartitionLabeling::from_groups(PartitionSource::Kmeans, &g)
    }

    #[test]
    fn consensus_ignores_input_row_order() {
        // every pair below ties at co-association 0.5
        let p = part(&[&["a", "b"], &["c", "d"], &["e"]]);
        let q = part(&[&["b", "c"], &["d", "e"], &["a"]]);
        let base = weighted_consensus(&[p.clone(), q.clone()], &[1.0, 1.0], 3).unwrap();
        let order: Vec<String> = ["e", "d", "c", "b", "a"].iter().map(|s| s.to_string()).collect();
        let (p2, q2) = (p.reordered(&order).unwrap(), q.reordered(&order).unwrap());
        let swapped = weighted_consensus(&[q2, p2], &[1.0, 1.0], 3).unwrap();
        assert!(base.labeling.same_grouping(&swapped.labeling));
        assert_eq!(base.coassoc.ids, vec!["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn nmi_edge_cases() {
        let p = part(&[&["a", "b"], &["c", "d"]]);
        assert!((nmi(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let one = part(&[&["a", "b", "c", "d"]]);
        assert_eq!(nmi(&p, &one).unwrap(), 0.0);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        let crossed = part(&[&["a", "c"], &["b", "d"]]);
        assert!(nmi(&p, &crossed).unwrap().abs() < 1e-12);
        let other = part(&[&["a", "b"], &["c", "x"]]);
        assert_eq!(nmi(&p, &other), Err(EnsembleError::IdMismatch));
    }

    #[test]
    fn ari_identity_and_independence() {
        let p = part(&[&["a", "b"], &["c", "d"], &["e"]]);
        assert!((adjusted_rand_index(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let crossed = part(&[&["a", "c"], &["b", "d"]]);
        let p4 = part(&[&["a", "b"], &["c", "d"]]);
        assert!(adjusted_rand_index(&p4, &crossed).unwrap() < 0.0);
    }

    #[test]
    fn zero_weight_is_ignored() {
        let p = part(&[&["a", "b", "c"], &["d", "e"]]);
        let q = part(&[&["a", "d"], &["b", "e"], &["c"]]);
        let c = weighted_consensus(&[p.clone(), q], &[1.0, 0.0], 2).unwrap();
        assert!(c.labeling.same_grouping(&p));
    }

    #[test]
    fn weight_errors() {
        let p = part(&[&["a", "b"]]);
        assert_eq!(weighted_consensus(&[], &[], 1).unwrap_err(), EnsembleError::EmptyInput);
        assert_eq!(
            weighted_consensus(&[p.clone()], &[0.0], 1).unwrap_err(),
            EnsembleError::WeightSumZero
        );
        assert!(matches!(
            weighted_consensus(&[p], &[-1.0], 1),
            Err(EnsembleError::InvalidWeight(_))
        ));
    }

    #[test]
    fn coassoc_is_weighted_frequency() {
        let p = part(&[&["a", "b"], &["c"]]);
        let q = part(&[&["a"], &["b", "c"]]);
        let m = coassociation(&[p, q], &[2.0, 1.0]).unwrap();
        assert!((m.values[0][1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.values[1][2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.values[0][2], 0.0);
        assert_eq!(m.values[2][2], 1.0);
    }
}
