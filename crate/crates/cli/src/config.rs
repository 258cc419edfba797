//! JSON run configuration, command-line overrides and the resolved settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use genesem::cluster::{ClusterMethod, ClustererSpec};
use genesem::encode::FeatureCombo;
use genesem::metrics::SilhouetteOptions;
use genesem::reduce::{ReducerMethod, TwoStageSpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub label: String,
    pub path: PathBuf,
}

/// Every setting a job can take. Keys in a `--config` file use these names;
/// command-line flags override them. The manifest stores the fully resolved
/// copy, which can be fed back through `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub genes: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub embeddings: Vec<ModelEntry>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub k: Option<usize>,
    /// Single-run choices.
    pub reducer: Option<String>,
    pub combo: Option<String>,
    pub clusterer: Option<String>,
    /// Sweep axes.
    pub reducers: Option<Vec<String>>,
    pub combos: Option<Vec<String>>,
    pub clusterers: Option<Vec<String>>,
    pub include_noise_as_cluster: Option<bool>,
    pub stage1_dims: Option<usize>,
    pub stage2_dims: Option<usize>,
    pub perplexity: Option<f64>,
    pub tsne_iterations: Option<usize>,
    pub n_neighbors: Option<usize>,
    pub min_dist: Option<f64>,
    pub umap_epochs: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub restarts: Option<usize>,
}

impl FileConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.genes, &mut cfg.annotations, &mut cfg.descriptions]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        for m in &mut cfg.embeddings {
            rebase(&mut m.path);
        }
        Ok(cfg)
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn non_empty(v: &Option<Vec<String>>) -> Option<&[String]> {
    v.as_deref().filter(|v| !v.is_empty())
}

fn parse_all<T: std::str::FromStr<Err = String>>(v: &[String]) -> Result<Vec<T>, CliError> {
    v.iter().map(|s| parse(s)).collect()
}

/// The inputs and hyperparameters of a job after defaults are applied.
#[derive(Debug, Clone)]
pub struct Settings {
    pub genes: PathBuf,
    pub annotations: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub embeddings: Vec<ModelEntry>,
    pub seed: u64,
    pub workers: usize,
    pub reducer: ReducerMethod,
    pub combo: FeatureCombo,
    pub clusterer: ClusterMethod,
    pub reducers: Vec<ReducerMethod>,
    pub combos: Vec<FeatureCombo>,
    pub clusterers: Vec<ClusterMethod>,
    pub silhouette: SilhouetteOptions,
    pub reduction: TwoStageSpec,
    pub clustering: ClustererSpec,
}

impl Settings {
    pub fn resolve(cfg: &FileConfig) -> Result<Self, CliError> {
        let genes = cfg
            .genes
            .clone()
            .ok_or_else(|| CliError::Usage("--genes is required".into()))?;
        let mut reduction = TwoStageSpec::new(ReducerMethod::Umap);
        if let Some(v) = cfg.stage1_dims {
            reduction.stage1_dims = v;
        }
        if let Some(v) = cfg.stage2_dims {
            reduction.stage2_dims = v;
        }
        if reduction.stage2_dims == 0 || reduction.stage2_dims >= reduction.stage1_dims {
            return Err(CliError::Usage("need 0 < stage2_dims < stage1_dims".into()));
        }
        if let Some(v) = cfg.perplexity {
            reduction.tsne.perplexity = v;
        }
        if let Some(v) = cfg.tsne_iterations {
            reduction.tsne.iterations = v;
        }
        if let Some(v) = cfg.n_neighbors {
            reduction.umap.n_neighbors = v;
        }
        if let Some(v) = cfg.min_dist {
            reduction.umap.min_dist = v;
        }
        if let Some(v) = cfg.umap_epochs {
            reduction.umap.epochs = v;
        }
        let mut clustering = ClustererSpec::new(ClusterMethod::KMeans);
        if let Some(v) = cfg.k {
            clustering.k = v;
        }
        if let Some(v) = cfg.min_cluster_size {
            clustering.min_cluster_size = v;
        }
        clustering.min_samples = cfg.min_samples;
        if let Some(v) = cfg.restarts {
            clustering.restarts = v;
        }
        let workers = cfg.workers.unwrap_or(1);
        if workers == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        Ok(Self {
            genes,
            annotations: cfg.annotations.clone(),
            descriptions: cfg.descriptions.clone(),
            embeddings: cfg.embeddings.clone(),
            seed: cfg.seed.unwrap_or(0),
            workers,
            reducer: parse(cfg.reducer.as_deref().unwrap_or("umap"))?,
            combo: parse(cfg.combo.as_deref().unwrap_or("go_terms_and_acronyms"))?,
            clusterer: parse(cfg.clusterer.as_deref().unwrap_or("kmeans"))?,
            reducers: match non_empty(&cfg.reducers) {
                Some(v) => parse_all(v)?,
                None => ReducerMethod::ALL.to_vec(),
            },
            combos: match non_empty(&cfg.combos) {
                Some(v) => parse_all(v)?,
                None => FeatureCombo::ALL.to_vec(),
            },
            clusterers: match non_empty(&cfg.clusterers) {
                Some(v) => parse_all(v)?,
                None => ClusterMethod::ALL.to_vec(),
            },
            silhouette: SilhouetteOptions {
                include_noise_as_cluster: cfg.include_noise_as_cluster.unwrap_or(false),
            },
            reduction,
            clustering,
        })
    }

    /// The resolved settings in config-file form.
    pub fn snapshot(&self) -> FileConfig {
        // absolute paths, so the snapshot works from any directory
        let abs = |p: &PathBuf| std::path::absolute(p).unwrap_or_else(|_| p.clone());
        FileConfig {
            genes: Some(abs(&self.genes)),
            annotations: self.annotations.as_ref().map(abs),
            descriptions: self.descriptions.as_ref().map(abs),
            embeddings: self
                .embeddings
                .iter()
                .map(|m| ModelEntry {
                    label: m.label.clone(),
                    path: abs(&m.path),
                })
                .collect(),
            seed: Some(self.seed),
            workers: Some(self.workers),
            k: Some(self.clustering.k),
            reducer: Some(self.reducer.key().into()),
            combo: Some(self.combo.key().into()),
            clusterer: Some(self.clusterer.key().into()),
            reducers: Some(self.reducers.iter().map(|r| r.key().into()).collect()),
            combos: Some(self.combos.iter().map(|c| c.key().into()).collect()),
            clusterers: Some(self.clusterers.iter().map(|c| c.key().into()).collect()),
            include_noise_as_cluster: Some(self.silhouette.include_noise_as_cluster),
            stage1_dims: Some(self.reduction.stage1_dims),
            stage2_dims: Some(self.reduction.stage2_dims),
            perplexity: Some(self.reduction.tsne.perplexity),
            tsne_iterations: Some(self.reduction.tsne.iterations),
            n_neighbors: Some(self.reduction.umap.n_neighbors),
            min_dist: Some(self.reduction.umap.min_dist),
            umap_epochs: Some(self.reduction.umap.epochs),
            min_cluster_size: Some(self.clustering.min_cluster_size),
            min_samples: self.clustering.min_samples,
            restarts: Some(self.clustering.restarts),
        }
    }
}
