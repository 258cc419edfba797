use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClusterError, ClusterLabels, ClustererSpec};
use crate::matrix::{squared_euclidean, DenseMatrix};

const MAX_ITER: usize = 300;

/// Result of the best k-means restart.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: ClusterLabels,
    /// Row-major `k × dims` centroids, indexed by raw assignment.
    pub centroids: Vec<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step, one list per restart.
    pub history: Vec<Vec<f64>>,
}

fn nearest(point: &[f64], centroids: &[f64], dims: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dims.max(1)).enumerate() {
        let d = squared_euclidean(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, later centres drawn with
/// probability proportional to squared distance from the nearest centre.
fn seed_plus_plus(points: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.n_rows();
    let dims = points.n_cols();
    let mut centroids = Vec::with_capacity(k * dims);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(points.row(first));
    chosen[first] = true;
    let mut d2: Vec<f64> = points
        .rows()
        .map(|p| squared_euclidean(p, points.row(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every point coincides with a centre: lowest unused index
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        let c = points.row(pick);
        centroids.extend_from_slice(c);
        for (w, p) in d2.iter_mut().zip(points.rows()) {
            *w = w.min(squared_euclidean(p, c));
        }
    }
    centroids
}

struct Run {
    assignment: Vec<usize>,
    centroids: Vec<f64>,
    inertia: f64,
    history: Vec<f64>,
}

fn lloyd(points: &DenseMatrix, k: usize, mut centroids: Vec<f64>) -> Run {
    let n = points.n_rows();
    let dims = points.n_cols();
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut dist = vec![0.0; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, p) in points.rows().enumerate() {
            let (c, d) = nearest(p, &centroids, dims);
            dist[i] = d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        // empty clusters take the point farthest from its centroid
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n).filter(|&i| counts[assignment[i]] > 1).fold(
                None,
                |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                },
            );
            let Some(far) = far else { continue };
            counts[assignment[far]] -= 1;
            counts[c] = 1;
            assignment[far] = c;
            centroids[c * dims..(c + 1) * dims].copy_from_slice(points.row(far));
            dist[far] = 0.0;
            changed = true;
        }
        history.push(dist.iter().sum());
        if !changed && history.len() > 1 {
            break;
        }
        // update step
        let mut sums = vec![0.0; k * dims];
        for (p, &a) in points.rows().zip(&assignment) {
            for (s, v) in sums[a * dims..(a + 1) * dims].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dims {
                    centroids[c * dims + d] = sums[c * dims + d] / counts[c] as f64;
                }
            }
        }
    }
    let inertia = points
        .rows()
        .zip(&assignment)
        .map(|(p, &a)| squared_euclidean(p, &centroids[a * dims..(a + 1) * dims]))
        .sum();
    Run {
        assignment,
        centroids,
        inertia,
        history,
    }
}

/// Best of `spec.restarts` seeded k-means++ / Lloyd runs by final inertia.
pub fn kmeans_fit(points: &DenseMatrix, spec: &ClustererSpec) -> Result<KMeansFit, ClusterError> {
    let n = points.n_rows();
    let k = spec.k;
    if k < 1 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut best: Option<Run> = None;
    let mut history = Vec::new();
    for _ in 0..spec.restarts.max(1) {
        let seeds = seed_plus_plus(points, k, &mut rng);
        let run = lloyd(points, k, seeds);
        history.push(run.history.clone());
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(KMeansFit {
        labels: ClusterLabels::from_raw(best.assignment.iter().map(|&a| a as i64)),
        centroids: best.centroids,
        inertia: best.inertia,
        history,
    })
}

pub fn kmeans(points: &DenseMatrix, spec: &ClustererSpec) -> Result<ClusterLabels, ClusterError> {
    kmeans_fit(points, spec).map(|f| f.labels)
}

#[cfg(test)]
mod tests {
    use super::super::ClusterMethod;
    use super::*;

    fn spec(k: usize) -> ClustererSpec {
        ClustererSpec::new(ClusterMethod::KMeans)
            .with_k(k)
            .with_seed(3)
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let pts =
            DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 5.0], [3.0, 2.0], [9.0, 9.0]]).unwrap();
        let fit = kmeans_fit(&pts, &spec(4)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert_eq!(fit.labels.n_clusters(), 4);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = DenseMatrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let fit = kmeans_fit(&pts, &spec(1)).unwrap();
        assert_eq!(fit.inertia, 2.0);
        assert_eq!(fit.labels.labels(), [0, 0]);
    }

    #[test]
    fn pairs_grouped() {
        let pts =
            DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap();
        let fit = kmeans_fit(&pts, &spec(2)).unwrap();
        assert_eq!(fit.labels.labels(), [0, 0, 1, 1]);
        assert_eq!(fit.inertia, 1.0);
    }

    #[test]
    fn invalid_k() {
        let pts = DenseMatrix::from_rows(&[[0.0], [2.0]]).unwrap();
        assert_eq!(
            kmeans(&pts, &spec(3)).unwrap_err(),
            ClusterError::InvalidK { k: 3, n: 2 }
        );
        assert_eq!(
            kmeans(&pts, &spec(0)).unwrap_err(),
            ClusterError::InvalidK { k: 0, n: 2 }
        );
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let pts = DenseMatrix::from_rows(&[[1.0, 1.0]; 5]).unwrap();
        let fit = kmeans_fit(&pts, &spec(3)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert!(fit.labels.n_clusters() >= 1);
    }
}
