use serde::{Deserialize, Serialize};

use super::{euclidean, FeatureMatrix, PartitionLabeling, PartitionSource, StatsError};

/// One agglomeration step. Leaves are nodes `0..n`; the `i`-th merge creates
/// node `n + i`. `left < right` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_ids: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaf_ids.len()
    }

    /// Leaves in left-to-right drawing order (depth-first, left child first),
    /// which keeps branches from crossing.
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.n_leaves();
        if self.merges.is_empty() {
            return (0..n).collect();
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![n + self.merges.len() - 1];
        while let Some(node) = stack.pop() {
            if node < n {
                out.push(node);
            } else {
                let m = &self.merges[node - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }
}

/// Average-linkage agglomeration over Euclidean distances between rows.
pub fn hcluster(m: &FeatureMatrix) -> Result<Dendrogram, StatsError> {
    let n = m.n_rows();
    if n < 2 {
        return Err(StatsError::TooFewRows(n));
    }
    let dist: Vec<Vec<f64>> = m
        .values
        .iter()
        .map(|a| m.values.iter().map(|b| euclidean(a, b)).collect())
        .collect();
    hcluster_distances(&m.row_ids, &dist)
}

/// Average-linkage agglomeration over a precomputed distance matrix.
///
/// The closest pair of active nodes merges first; equal distances go to the
/// smallest `(left, right)` node-id pair.
pub fn hcluster_distances(ids: &[String], dist: &[Vec<f64>]) -> Result<Dendrogram, StatsError> {
    let n = ids.len();
    if n < 2 {
        return Err(StatsError::TooFewRows(n));
    }
    if dist.len() != n
        || dist.iter().any(|r| r.len() != n)
        || (0..n).any(|i| (0..n).any(|j| !dist[i][j].is_finite() || dist[i][j] != dist[j][i]))
    {
        return Err(StatsError::BadDistances);
    }

    let total = 2 * n - 1;
    let mut d = vec![vec![0.0; total]; total];
    for i in 0..n {
        d[i][..n].copy_from_slice(&dist[i]);
    }
    let mut size = vec![1usize; total];
    // kept sorted ascending: new nodes always carry the largest id
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                if best.is_none_or(|(_, _, h)| d[a][b] < h) {
                    best = Some((a, b, d[a][b]));
                }
            }
        }
        let (a, b, h) = best.unwrap();
        let node = n + step;
        size[node] = size[a] + size[b];
        active.retain(|&x| x != a && x != b);
        let (wa, wb) = (size[a] as f64, size[b] as f64);
        for &c in &active {
            let (x, y) = (d[a][c], d[b][c]);
            // the weighted mean lies between its inputs; clamping removes
            // rounding that would otherwise allow a height inversion
            let avg = ((wa * x + wb * y) / (wa + wb)).clamp(x.min(y), x.max(y));
            d[node][c] = avg;
            d[c][node] = avg;
        }
        active.push(node);
        merges.push(Merge {
            left: a,
            right: b,
            height: h,
            size: size[node],
        });
    }

    Ok(Dendrogram {
        leaf_ids: ids.to_vec(),
        merges,
    })
}

/// Removes the `k − 1` highest merges and labels the resulting subtrees.
pub fn cut_dendrogram(d: &Dendrogram, k: usize) -> Result<PartitionLabeling, StatsError> {
    let n = d.n_leaves();
    if k == 0 || k > n {
        return Err(StatsError::InvalidK { k, n });
    }
    let mut parent: Vec<usize> = (0..n + d.merges.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, m) in d.merges.iter().take(n - k).enumerate() {
        let node = n + i;
        let l = find(&mut parent, m.left);
        let r = find(&mut parent, m.right);
        parent[l] = node;
        parent[r] = node;
    }
    let roots: Vec<usize> = (0..n).map(|leaf| find(&mut parent, leaf)).collect();
    Ok(PartitionLabeling::new(
        PartitionSource::Hierarchical,
        d.leaf_ids.clone(),
        &roots,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(
            (0..xs.len()).map(|i| format!("p{i}")).collect(),
            vec!["x".into()],
            xs.iter().map(|&x| vec![x]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_one_ten() {
        let d = hcluster(&line(&[0.0, 1.0, 10.0])).unwrap();
        assert_eq!(d.merges.len(), 2);
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!(d.merges[0].height, 1.0);
        assert_eq!((d.merges[1].left, d.merges[1].right), (2, 3));
        assert_eq!(d.merges[1].height, 9.5);
        assert_eq!(d.merges[1].size, 3);

        let two = cut_dendrogram(&d, 2).unwrap();
        assert_eq!(two.labels, vec![0, 0, 1]);
        assert_eq!(cut_dendrogram(&d, 1).unwrap().labels, vec![0, 0, 0]);
        assert_eq!(cut_dendrogram(&d, 3).unwrap().labels, vec![0, 1, 2]);
        assert!(cut_dendrogram(&d, 4).is_err());
    }

    #[test]
    fn identical_points_merge_at_zero() {
        let d = hcluster(&line(&[2.5, 2.5])).unwrap();
        assert_eq!(d.merges[0].height, 0.0);
    }

    #[test]
    fn ties_go_to_smallest_pair() {
        // 0-1 and 1-2 both at distance 1
        let d = hcluster(&line(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
    }

    #[test]
    fn leaf_order_covers_every_leaf() {
        let d = hcluster(&line(&[5.0, 0.0, 9.0, 1.0, 4.5])).unwrap();
        let mut order = d.leaf_order();
        order.sort();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(hcluster(&line(&[1.0])), Err(StatsError::TooFewRows(1))));
        let ids = vec!["a".to_string(), "b".to_string()];
        assert_eq!(
            hcluster_distances(&ids, &[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap_err(),
            StatsError::BadDistances
        );
    }
}
