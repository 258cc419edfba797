use super::{ClusterError, ClusterLabels, ClustererSpec};
use crate::matrix::{squared_euclidean, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Linkage {
    Single,
    Average,
    Ward,
}

/// Bottom-up merging with Lance–Williams updates until `spec.k` clusters remain.
///
/// A cluster is identified by its smallest point index. The closest pair is
/// merged first; equal distances go to the lexicographically smallest
/// `(id, id)` pair. Ward distances are merge costs
/// `|A||B| / (|A| + |B|) · |μA − μB|²`.
pub fn agglomerative(
    points: &DenseMatrix,
    spec: &ClustererSpec,
) -> Result<ClusterLabels, ClusterError> {
    let n = points.n_rows();
    let k = spec.k;
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let linkage = spec
        .method
        .linkage()
        .ok_or_else(|| ClusterError::InvalidSpec("not an agglomerative method".into()))?;

    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let sq = squared_euclidean(points.row(i), points.row(j));
            let d = match linkage {
                Linkage::Ward => 0.5 * sq,
                Linkage::Single | Linkage::Average => sq.sqrt(),
            };
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut nn = vec![(f64::INFINITY, usize::MAX); n];
    let row_nn = |dist: &[f64], active: &[bool], i: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..n {
            if j != i && active[j] && dist[i * n + j] < best.0 {
                best = (dist[i * n + j], j);
            }
        }
        best
    };
    for i in 0..n {
        nn[i] = row_nn(&dist, &active, i);
    }

    for _ in 0..(n - k) {
        let (mut a, mut b, mut best) = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            let (d, j) = nn[i];
            let (lo, hi) = (i.min(j), i.max(j));
            if d < best || (d == best && (lo, hi) < (a, b)) {
                (a, b, best) = (lo, hi, d);
            }
        }

        let (na, nb) = (size[a] as f64, size[b] as f64);
        let d_ab = dist[a * n + b];
        for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
            let (dac, dbc) = (dist[a * n + c], dist[b * n + c]);
            let updated = match linkage {
                Linkage::Single => dac.min(dbc),
                Linkage::Average => (na * dac + nb * dbc) / (na + nb),
                Linkage::Ward => {
                    let nc = size[c] as f64;
                    ((na + nc) * dac + (nb + nc) * dbc - nc * d_ab) / (na + nb + nc)
                }
            };
            dist[a * n + c] = updated;
            dist[c * n + a] = updated;
        }
        active[b] = false;
        size[a] += size[b];
        for o in owner.iter_mut().filter(|o| **o == b) {
            *o = a;
        }

        nn[a] = row_nn(&dist, &active, a);
        for c in (0..n).filter(|&c| active[c] && c != a) {
            let (d, j) = nn[c];
            if j == a || j == b {
                nn[c] = row_nn(&dist, &active, c);
            } else {
                let dca = dist[c * n + a];
                if dca < d || (dca == d && a < j) {
                    nn[c] = (dca, a);
                }
            }
        }
    }
    Ok(ClusterLabels::from_raw(owner.iter().map(|&o| o as i64)))
}
