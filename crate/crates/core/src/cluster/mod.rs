//! The five clusterers: k-means, HDBSCAN, and agglomerative clustering with
//! single, average and Ward linkage.

mod agglomerative;
mod hdbscan;
mod kmeans;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::matrix::DenseMatrix;

pub use agglomerative::{agglomerative, Linkage};
pub use hdbscan::{
    condense_tree, core_distances, hdbscan, minimum_spanning_tree, mutual_reachability,
    CondensedEdge, MstEdge,
};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("invalid clusterer spec: {0}")]
    InvalidSpec(String),
}

/// Label used for points HDBSCAN leaves unclustered.
pub const NOISE: i32 = -1;

/// Per-point cluster labels: `-1` for noise, otherwise dense `0..n_clusters`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterLabels {
    labels: Vec<i32>,
    n_clusters: usize,
}

impl ClusterLabels {
    /// Renumbers arbitrary labels densely in order of first appearance.
    /// Negative inputs become noise.
    pub fn from_raw<I: IntoIterator<Item = i64>>(raw: I) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .into_iter()
            .map(|l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i32;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Self {
            labels,
            n_clusters: map.len(),
        }
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Point indices of every cluster, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClusterMethod {
    AggSingle,
    AggWard,
    AggAverage,
    Hdbscan,
    KMeans,
}

impl ClusterMethod {
    /// Row order of the score table.
    pub const ALL: [ClusterMethod; 5] = [
        Self::AggSingle,
        Self::AggWard,
        Self::AggAverage,
        Self::Hdbscan,
        Self::KMeans,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::AggSingle => "agg_single",
            Self::AggWard => "agg_ward",
            Self::AggAverage => "agg_average",
            Self::Hdbscan => "hdbscan",
            Self::KMeans => "kmeans",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::AggSingle => "AC single",
            Self::AggWard => "AC ward",
            Self::AggAverage => "AC average",
            Self::Hdbscan => "HDBSCAN",
            Self::KMeans => "K-means",
        }
    }

    pub fn linkage(self) -> Option<Linkage> {
        match self {
            Self::AggSingle => Some(Linkage::Single),
            Self::AggAverage => Some(Linkage::Average),
            Self::AggWard => Some(Linkage::Ward),
            _ => None,
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ClusterMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "agg_single" | "single" | "ac_single" => Ok(Self::AggSingle),
            "agg_ward" | "ward" | "ac_ward" => Ok(Self::AggWard),
            "agg_average" | "average" | "ac_average" => Ok(Self::AggAverage),
            "hdbscan" => Ok(Self::Hdbscan),
            "kmeans" | "k_means" => Ok(Self::KMeans),
            _ => Err(format!("unknown clusterer `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClustererSpec {
    pub method: ClusterMethod,
    /// Cluster count for k-means and the agglomerative cut.
    pub k: usize,
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size` when unset.
    pub min_samples: Option<usize>,
    pub allow_single_cluster: bool,
    pub restarts: usize,
    pub seed: u64,
}

impl ClustererSpec {
    pub fn new(method: ClusterMethod) -> Self {
        Self {
            method,
            k: 6,
            min_cluster_size: 15,
            min_samples: None,
            allow_single_cluster: false,
            restarts: 10,
            seed: 0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }
}

/// Runs the clusterer named by `spec.method`.
pub fn cluster(points: &DenseMatrix, spec: &ClustererSpec) -> Result<ClusterLabels, ClusterError> {
    match spec.method {
        ClusterMethod::KMeans => kmeans(points, spec),
        ClusterMethod::Hdbscan => hdbscan(points, spec),
        ClusterMethod::AggSingle | ClusterMethod::AggAverage | ClusterMethod::AggWard => {
            agglomerative(points, spec)
        }
    }
}
