//! Silhouette evaluation and label agreement.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::cluster::{ClusterLabels, NOISE};
use crate::matrix::{squared_euclidean, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("silhouette needs at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SilhouetteOptions {
    /// Score noise points as one extra cluster instead of leaving them out.
    pub include_noise_as_cluster: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteReport {
    pub score: f64,
    /// `None` for points left out of the evaluation (noise).
    pub per_point: Vec<Option<f64>>,
    pub n_evaluated: usize,
}

/// Group id per point after the noise rule, `None` when excluded.
fn groups(labels: &ClusterLabels, opts: SilhouetteOptions) -> (Vec<Option<usize>>, usize) {
    let noise_group = labels.n_clusters();
    let mut uses_noise = false;
    let g = labels
        .labels()
        .iter()
        .map(|&l| {
            if l == NOISE {
                uses_noise |= opts.include_noise_as_cluster;
                opts.include_noise_as_cluster.then_some(noise_group)
            } else {
                Some(l as usize)
            }
        })
        .collect();
    (g, labels.n_clusters() + usize::from(uses_noise))
}

/// Per-point silhouette `(b - a) / max(a, b)`: `a` is the mean distance to
/// the rest of the point's own cluster, `b` the smallest mean distance to
/// another cluster. Points in singleton clusters score 0.
pub fn silhouette_samples_with(
    points: &DenseMatrix,
    labels: &ClusterLabels,
    opts: SilhouetteOptions,
) -> Result<Vec<Option<f64>>, MetricsError> {
    if points.n_rows() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            points: points.n_rows(),
            labels: labels.len(),
        });
    }
    let (group, n_groups) = groups(labels, opts);
    let mut sizes = vec![0usize; n_groups];
    for g in group.iter().flatten() {
        sizes[*g] += 1;
    }
    let present = sizes.iter().filter(|&&s| s > 0).count();
    if present < 2 {
        return Err(MetricsError::TooFewClusters(present));
    }

    let out = (0..points.n_rows())
        .into_par_iter()
        .map(|i| {
            let own = group[i]?;
            if sizes[own] == 1 {
                return Some(0.0);
            }
            let mut sums = vec![0.0; n_groups];
            let pi = points.row(i);
            for (j, gj) in group.iter().enumerate() {
                if let Some(gj) = gj {
                    if j != i {
                        sums[*gj] += squared_euclidean(pi, points.row(j)).sqrt();
                    }
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..n_groups)
                .filter(|&g| g != own && sizes[g] > 0)
                .map(|g| sums[g] / sizes[g] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            Some(if denom > 0.0 { (b - a) / denom } else { 0.0 })
        })
        .collect();
    Ok(out)
}

pub fn silhouette_samples(
    points: &DenseMatrix,
    labels: &ClusterLabels,
) -> Result<Vec<Option<f64>>, MetricsError> {
    silhouette_samples_with(points, labels, SilhouetteOptions::default())
}

pub fn silhouette_report(
    points: &DenseMatrix,
    labels: &ClusterLabels,
    opts: SilhouetteOptions,
) -> Result<SilhouetteReport, MetricsError> {
    let per_point = silhouette_samples_with(points, labels, opts)?;
    let evaluated: Vec<f64> = per_point.iter().flatten().copied().collect();
    let score = evaluated.iter().sum::<f64>() / evaluated.len() as f64;
    Ok(SilhouetteReport {
        score: score.clamp(-1.0, 1.0),
        n_evaluated: evaluated.len(),
        per_point,
    })
}

/// Mean silhouette over the evaluated points; noise excluded.
pub fn silhouette_score(points: &DenseMatrix, labels: &ClusterLabels) -> Result<f64, MetricsError> {
    silhouette_report(points, labels, SilhouetteOptions::default()).map(|r| r.score)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings; noise counts as a label.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let mut table: HashMap<(i32, i32), usize> = HashMap::new();
    let mut rows: HashMap<i32, usize> = HashMap::new();
    let mut cols: HashMap<i32, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_rows * sum_cols / choose2(n).max(f64::MIN_POSITIVE);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> DenseMatrix {
        DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap()
    }

    #[test]
    fn two_blob_value() {
        let labels = ClusterLabels::from_raw([0, 0, 1, 1]);
        let expected = 1.0 - 1.0 / ((10.0 + 101f64.sqrt()) / 2.0);
        let samples = silhouette_samples(&two_blobs(), &labels).unwrap();
        for s in samples {
            assert!((s.unwrap() - expected).abs() < 1e-12);
        }
        let score = silhouette_score(&two_blobs(), &labels).unwrap();
        assert!((score - 0.90025).abs() < 1e-5, "{score}");
    }

    #[test]
    fn singletons_score_zero() {
        let labels = ClusterLabels::from_raw([0, 1, 2, 3]);
        let samples = silhouette_samples(&two_blobs(), &labels).unwrap();
        assert!(samples.iter().all(|s| *s == Some(0.0)));
        assert_eq!(silhouette_score(&two_blobs(), &labels).unwrap(), 0.0);
    }

    #[test]
    fn one_cluster_is_an_error() {
        let labels = ClusterLabels::from_raw([0, 0, 0, 0]);
        assert_eq!(
            silhouette_score(&two_blobs(), &labels).unwrap_err(),
            MetricsError::TooFewClusters(1)
        );
    }

    #[test]
    fn noise_excluded_or_grouped() {
        let pts =
            DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0], [5.0, 5.0]])
                .unwrap();
        let labels = ClusterLabels::from_raw([0, 0, 1, 1, -1]);
        let r = silhouette_report(&pts, &labels, SilhouetteOptions::default()).unwrap();
        assert_eq!(r.n_evaluated, 4);
        assert_eq!(r.per_point[4], None);
        assert!((r.score - 0.90025).abs() < 1e-5);
        let opts = SilhouetteOptions {
            include_noise_as_cluster: true,
        };
        let r = silhouette_report(&pts, &labels, opts).unwrap();
        assert_eq!(r.n_evaluated, 5);
        assert_eq!(r.per_point[4], Some(0.0));
        // noise alone is not a second cluster
        let only_noise = ClusterLabels::from_raw([0, 0, 0, 0, -1]);
        assert!(silhouette_report(&pts, &only_noise, SilhouetteOptions::default()).is_err());
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(ari < 0.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]), 1.0);
    }
}
