//! Multi-kernel workload set generation from the workload database.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::WorkloadDatabase;

#[derive(Debug, Error, PartialEq)]
pub enum PairgenError {
    #[error("benchmark `{0}` is not in the workload database")]
    UnknownBenchmark(String),
    #[error("workload database is empty")]
    EmptyDatabase,
    #[error("set size {0} outside 2..=4")]
    InvalidSize(usize),
    #[error("co-appearance strategy needs a curated set list")]
    MissingCurated,
    #[error("curated set repeats `{0}`")]
    DuplicateMember(String),
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Contending,
    Complementary,
    Coappearance,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Contending, Strategy::Complementary, Strategy::Coappearance];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Contending => "contending",
            Strategy::Complementary => "complementary",
            Strategy::Coappearance => "coappearance",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Host-side issue order of the members' operations. `Custom` lists, for each
/// issued op in turn, the member whose next op is issued.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaunchPolicy {
    BreadthFirst,
    DepthFirst,
    Custom(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiKernelSpec {
    pub id: String,
    pub members: Vec<String>,
    pub strategy: Strategy,
    pub launch_policy: LaunchPolicy,
    pub slice_size: Option<u64>,
    pub rationale: String,
}

impl MultiKernelSpec {
    pub fn new(members: Vec<String>, strategy: Strategy, rationale: String) -> Self {
        MultiKernelSpec {
            id: members.join("_"),
            members,
            strategy,
            launch_policy: LaunchPolicy::BreadthFirst,
            slice_size: None,
            rationale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairgenParams {
    /// Affinity quantile above which sets count as contending.
    pub contending_quantile: f64,
    pub launch_policy: LaunchPolicy,
    pub slice_size: Option<u64>,
}

impl Default for PairgenParams {
    fn default() -> Self {
        PairgenParams {
            contending_quantile: 0.75,
            launch_policy: LaunchPolicy::BreadthFirst,
            slice_size: None,
        }
    }
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of `values`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Threshold separating contending from complementary sets: the given
/// quantile of all off-diagonal affinities.
pub fn affinity_threshold(db: &WorkloadDatabase, q: f64) -> f64 {
    let n = db.benchmarks.len();
    let off: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| db.affinity[i][j])
        .collect();
    quantile(&off, q)
}

fn pairs(set: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    set.iter()
        .enumerate()
        .flat_map(move |(a, &i)| set[a + 1..].iter().map(move |&j| (i, j)))
}

fn min_affinity(db: &WorkloadDatabase, set: &[usize]) -> f64 {
    pairs(set).map(|(i, j)| db.affinity[i][j]).fold(f64::INFINITY, f64::min)
}

fn max_affinity(db: &WorkloadDatabase, set: &[usize]) -> f64 {
    pairs(set).map(|(i, j)| db.affinity[i][j]).fold(f64::NEG_INFINITY, f64::max)
}

fn mean_affinity_to(db: &WorkloadDatabase, c: usize, set: &[usize]) -> f64 {
    set.iter().map(|&i| db.affinity[c][i]).sum::<f64>() / set.len() as f64
}

/// Per consensus cluster, the member with the smallest summed PCA distance to
/// its co-members. Ordered by cluster label.
pub fn medoids(db: &WorkloadDatabase) -> Vec<usize> {
    let n = db.benchmarks.len();
    (0..db.n_clusters())
        .filter_map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| db.label(i) == c).collect();
            members
                .iter()
                .map(|&i| (i, members.iter().map(|&j| db.pca_distance(i, j)).sum::<f64>()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| db.benchmarks[a.0].cmp(&db.benchmarks[b.0])))
                .map(|(i, _)| i)
        })
        .collect()
}

/// Candidate with the highest mean affinity to `set` among those passing
/// `keep`; ties go to the lexically smallest id.
fn nearest(
    db: &WorkloadDatabase,
    set: &[usize],
    candidates: impl Iterator<Item = usize>,
    keep: impl Fn(usize) -> bool,
) -> Option<usize> {
    candidates
        .filter(|c| !set.contains(c) && keep(*c))
        .map(|c| (c, mean_affinity_to(db, c, set)))
        .max_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| db.benchmarks[b.0].cmp(&db.benchmarks[a.0]))
        })
        .map(|(c, _)| c)
}

fn sorted_ids(db: &WorkloadDatabase, set: &[usize]) -> Vec<String> {
    let mut ids: Vec<String> = set.iter().map(|&i| db.benchmarks[i].clone()).collect();
    ids.sort();
    ids
}

fn contending_sets(db: &WorkloadDatabase, size: usize, thr: f64) -> Vec<Vec<usize>> {
    let n = db.benchmarks.len();
    let seeds = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| vec![i, j]))
        .filter(|s| db.affinity[s[0]][s[1]] >= thr);
    seeds
        .filter_map(|mut set| {
            while set.len() < size {
                let next = nearest(db, &set, 0..n, |c| set.iter().all(|&i| db.affinity[c][i] >= thr))?;
                set.push(next);
            }
            Some(set)
        })
        .collect()
}

fn complementary_sets(db: &WorkloadDatabase, size: usize, thr: f64) -> Vec<Vec<usize>> {
    let meds = medoids(db);
    meds.iter()
        .filter_map(|&start| {
            // farthest medoid from the start, maximizing the minimum distance
            let far = meds
                .iter()
                .copied()
                .filter(|&m| m != start)
                .max_by(|&a, &b| {
                    db.pca_distance(start, a)
                        .total_cmp(&db.pca_distance(start, b))
                        .then_with(|| db.benchmarks[b].cmp(&db.benchmarks[a]))
                })?;
            let mut set = vec![start, far];
            if db.affinity[start][far] >= thr {
                return None;
            }
            while set.len() < size {
                let next = nearest(db, &set, meds.iter().copied(), |c| {
                    set.iter().all(|&i| db.label(i) != db.label(c) && db.affinity[c][i] < thr)
                })?;
                set.push(next);
            }
            Some(set)
        })
        .collect()
}

fn fmt_set(db: &WorkloadDatabase, set: &[usize]) -> String {
    let labels: Vec<String> = set.iter().map(|&i| db.label(i).to_string()).collect();
    format!("clusters [{}]", labels.join(", "))
}

/// Generate ranked workload sets of `size` members.
///
/// Contending sets have every pairwise affinity at or above the contending
/// quantile and rank by minimum affinity, highest first. Complementary sets
/// are built from cluster medoids by farthest-point selection, keep every
/// pairwise affinity below the threshold, and rank by maximum affinity,
/// lowest first. Sets larger than two extend a pair with the closest
/// admissible benchmark (complementary: closest medoid of an unrepresented
/// cluster). Co-appearance sets are the curated sets of the requested size.
pub fn generate_sets(
    db: &WorkloadDatabase,
    strategy: Strategy,
    size: usize,
    curated: Option<&[Vec<String>]>,
    params: &PairgenParams,
) -> Result<Vec<MultiKernelSpec>, PairgenError> {
    if db.benchmarks.is_empty() {
        return Err(PairgenError::EmptyDatabase);
    }
    if !(2..=4).contains(&size) {
        return Err(PairgenError::InvalidSize(size));
    }
    let q = params.contending_quantile;
    if !(0.0..=1.0).contains(&q) {
        return Err(PairgenError::InvalidQuantile(q));
    }
    let finish = |members: Vec<String>, rationale: String| MultiKernelSpec {
        launch_policy: params.launch_policy.clone(),
        slice_size: params.slice_size,
        ..MultiKernelSpec::new(members, strategy, rationale)
    };

    if strategy == Strategy::Coappearance {
        let curated = curated.ok_or(PairgenError::MissingCurated)?;
        let mut out = Vec::new();
        for set in curated {
            let mut seen = BTreeSet::new();
            for id in set {
                if db.index_of(id).is_none() {
                    return Err(PairgenError::UnknownBenchmark(id.clone()));
                }
                if !seen.insert(id) {
                    return Err(PairgenError::DuplicateMember(id.clone()));
                }
            }
            if set.len() == size {
                out.push(finish(set.clone(), "curated co-appearance".into()));
            }
        }
        return Ok(out);
    }

    if db.benchmarks.len() < size {
        return Ok(Vec::new());
    }
    let thr = affinity_threshold(db, q);
    let raw = match strategy {
        Strategy::Contending => contending_sets(db, size, thr),
        _ => complementary_sets(db, size, thr),
    };

    let mut seen = BTreeSet::new();
    let mut ranked: Vec<(f64, Vec<String>, Vec<usize>)> = raw
        .into_iter()
        .filter_map(|set| {
            let ids = sorted_ids(db, &set);
            if !seen.insert(ids.clone()) {
                return None;
            }
            let key = match strategy {
                Strategy::Contending => -min_affinity(db, &set),
                _ => max_affinity(db, &set),
            };
            Some((key, ids, set))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    Ok(ranked
        .into_iter()
        .map(|(_, ids, set)| {
            let rationale = match strategy {
                Strategy::Contending => format!(
                    "{}; min affinity {:.4} >= threshold {:.4}",
                    fmt_set(db, &set),
                    min_affinity(db, &set),
                    thr
                ),
                _ => format!(
                    "{}; max affinity {:.4} < threshold {:.4}",
                    fmt_set(db, &set),
                    max_affinity(db, &set),
                    thr
                ),
            };
            finish(ids, rationale)
        })
        .collect())
}
