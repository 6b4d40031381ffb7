use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{squared_distance, FeatureMatrix, PartitionLabeling, PartitionSource, StatsError};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labeling: PartitionLabeling,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }
}

/// k-means++ seeding from a seeded ChaCha stream.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just past the final partial sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &points[next]));
        }
    }
    chosen
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut objective = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, mu)| (c, squared_distance(p, mu)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            objective += d;
            best
        })
        .collect();
    (labels, objective)
}

/// Lloyd's algorithm from k-means++ seeds, iterated to an assignment fixpoint
/// or [`MAX_LLOYD_ITERATIONS`]. A centroid that loses all members keeps its
/// previous position.
pub fn kmeans(m: &FeatureMatrix, k: usize, seed: u64) -> Result<KMeansResult, StatsError> {
    let n = m.n_rows();
    if k == 0 || k > n {
        return Err(StatsError::InvalidK { k, n });
    }
    let points = &m.values;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = seed_centroids(points, k, &mut rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();

    let mut history = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let (next, objective) = assign(points, &centroids);
        history.push(objective);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        let dim = m.n_cols();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }

    Ok(KMeansResult {
        labeling: PartitionLabeling::new(PartitionSource::Kmeans, m.row_ids.clone(), &labels),
        centroids,
        objective_history: history,
        converged,
    })
}
