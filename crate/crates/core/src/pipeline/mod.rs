//! Single pipeline runs and the factorial sweep over models, reducers,
//! feature combos and clusterers.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{cluster, ClusterError, ClusterLabels, ClusterMethod, ClustererSpec};
use crate::encode::{encode_store, BinaryFeatures, FeatureCombo};
use crate::ingest::{read_embeddings, AnnotationStore, IngestError};
use crate::matrix::DenseMatrix;
use crate::metrics::{silhouette_report, MetricsError, SilhouetteOptions, SilhouetteReport};
use crate::reduce::{
    reduce_block, reduce_stage2, Block, ReduceError, ReducerMethod, Stage1Blocks, TwoStageSpec,
};

pub use report::{
    cluster_enrichment_report, emit_scatter_svg, emit_sweep_table, emit_sweep_table_timed,
    format_score, ENRICHMENT_TOP, SVG_PALETTE,
};

/// Errors from a pipeline run, tagged with the stage that failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    InputFile { path: String, source: IngestError },
    #[error("ingest: cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("reduce: {0}")]
    Reduce(#[from] ReduceError),
    #[error("cluster: {0}")]
    Cluster(#[from] ClusterError),
    #[error("silhouette: {0}")]
    Silhouette(#[from] MetricsError),
    #[error("embeddings `{label}` have {got} rows for {expected} genes")]
    EmbeddingRows {
        label: String,
        expected: usize,
        got: usize,
    },
    #[error("sweep needs at least one embedding model")]
    NoModels,
    #[error("duplicate model label `{0}`")]
    DuplicateModel(String),
    #[error("coordinates must be 2-D, got {0} columns")]
    BadShape(usize),
    #[error("{rows} coordinate rows but {other} labels or names")]
    LengthMismatch { rows: usize, other: usize },
}

impl PipelineError {
    /// Name of the stage the error came from.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Ingest(_)
            | PipelineError::InputFile { .. }
            | PipelineError::Io { .. }
            | PipelineError::EmbeddingRows { .. } => "ingest",
            PipelineError::Reduce(_) => "reduce",
            PipelineError::Cluster(_) => "cluster",
            PipelineError::Silhouette(_) => "silhouette",
            PipelineError::NoModels | PipelineError::DuplicateModel(_) => "sweep",
            PipelineError::BadShape(_) | PipelineError::LengthMismatch { .. } => "emit",
        }
    }
}

/// Annotations of a gene set together with their binary encodings.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub store: AnnotationStore,
    pub features: BinaryFeatures,
}

impl Corpus {
    pub fn new(store: AnnotationStore) -> Self {
        let features = encode_store(&store);
        Self { store, features }
    }

    pub fn n_genes(&self) -> usize {
        self.store.genes().len()
    }
}

/// One model's embedding block, rows in gene order.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub label: String,
    pub matrix: DenseMatrix,
}

impl Embeddings {
    pub fn new(label: impl Into<String>, matrix: DenseMatrix) -> Self {
        Self {
            label: label.into(),
            matrix,
        }
    }

    /// Reads an embedding TSV and aligns it to the corpus gene order.
    pub fn load(
        label: impl Into<String>,
        path: &Path,
        corpus: &Corpus,
    ) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let matrix = read_embeddings(&text, corpus.store.genes()).map_err(|source| {
            PipelineError::InputFile {
                path: path.display().to_string(),
                source,
            }
        })?;
        Ok(Self::new(label, matrix))
    }
}

/// One pipeline variant; the model comes from the [`Embeddings`] it runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub combo: FeatureCombo,
    pub reducer: TwoStageSpec,
    pub clusterer: ClustererSpec,
    pub master_seed: u64,
    pub silhouette: SilhouetteOptions,
}

impl PipelineConfig {
    pub fn new(reducer: ReducerMethod, combo: FeatureCombo, clusterer: ClusterMethod) -> Self {
        Self {
            combo,
            reducer: TwoStageSpec::new(reducer),
            clusterer: ClustererSpec::new(clusterer),
            master_seed: 0,
            silhouette: SilhouetteOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub coords: DenseMatrix,
    pub labels: ClusterLabels,
    pub report: SilhouetteReport,
}

/// Stable 64-bit seed from a master seed and a list of name parts
/// (SHA-256, first 8 bytes little-endian).
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"genesem-seed-v1");
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Which stage-1 input a reduction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockKind {
    Embedding,
    Go,
    Acronyms,
}

impl BlockKind {
    pub fn key(self) -> &'static str {
        match self {
            BlockKind::Embedding => "embedding",
            BlockKind::Go => "go",
            BlockKind::Acronyms => "acronyms",
        }
    }
}

/// Seed of a stage-1 reduction. Only the embedding block depends on the model,
/// so GO and acronym reductions are shared by every model of a sweep.
pub fn stage1_seed(master: u64, model: &str, reducer: ReducerMethod, block: BlockKind) -> u64 {
    match block {
        BlockKind::Embedding => derive_seed(master, &["stage1", reducer.key(), block.key(), model]),
        BlockKind::Go | BlockKind::Acronyms => {
            derive_seed(master, &["stage1", reducer.key(), block.key()])
        }
    }
}

pub fn stage2_seed(master: u64, model: &str, reducer: ReducerMethod, combo: FeatureCombo) -> u64 {
    derive_seed(master, &["stage2", model, reducer.key(), combo.key()])
}

pub fn cluster_seed(
    master: u64,
    model: &str,
    reducer: ReducerMethod,
    combo: FeatureCombo,
    clusterer: ClusterMethod,
) -> u64 {
    derive_seed(
        master,
        &[
            "cluster",
            model,
            reducer.key(),
            combo.key(),
            clusterer.key(),
        ],
    )
}

fn check_rows(corpus: &Corpus, emb: &Embeddings) -> Result<(), PipelineError> {
    if emb.matrix.n_rows() != corpus.n_genes() {
        return Err(PipelineError::EmbeddingRows {
            label: emb.label.clone(),
            expected: corpus.n_genes(),
            got: emb.matrix.n_rows(),
        });
    }
    Ok(())
}

fn stage1(
    corpus: &Corpus,
    emb: &Embeddings,
    spec: &TwoStageSpec,
    block: BlockKind,
    master: u64,
) -> Result<DenseMatrix, PipelineError> {
    let input = match block {
        BlockKind::Embedding => Block::Dense(&emb.matrix),
        BlockKind::Go => Block::Binary(&corpus.features.go),
        BlockKind::Acronyms => Block::Binary(&corpus.features.acronyms),
    };
    let seed = stage1_seed(master, &emb.label, spec.method, block);
    Ok(reduce_block(input, &spec.stage(spec.stage1_dims, seed))?)
}

fn cluster_and_score(
    coords: &DenseMatrix,
    spec: &ClustererSpec,
    opts: SilhouetteOptions,
) -> Result<(ClusterLabels, SilhouetteReport), PipelineError> {
    let labels = cluster(coords, spec)?;
    let report = silhouette_report(coords, &labels, opts)?;
    Ok((labels, report))
}

/// Runs encode → two-stage reduction → clustering → silhouette for one
/// variant. Seeds are derived from the master seed and the cell identity,
/// so the result equals the corresponding sweep cell.
pub fn run_pipeline(
    config: &PipelineConfig,
    corpus: &Corpus,
    embeddings: &Embeddings,
) -> Result<RunOutput, PipelineError> {
    check_rows(corpus, embeddings)?;
    let spec = &config.reducer;
    let master = config.master_seed;
    let model = embeddings.label.as_str();
    let combo = config.combo;

    let blocks = Stage1Blocks {
        embedding: stage1(corpus, embeddings, spec, BlockKind::Embedding, master)?,
        go: combo
            .uses_go()
            .then(|| stage1(corpus, embeddings, spec, BlockKind::Go, master))
            .transpose()?,
        acronyms: combo
            .uses_acronyms()
            .then(|| stage1(corpus, embeddings, spec, BlockKind::Acronyms, master))
            .transpose()?,
    };
    let coords = reduce_stage2(
        &blocks,
        combo,
        spec,
        stage2_seed(master, model, spec.method, combo),
    )?;

    let clusterer = config.clusterer.clone().with_seed(cluster_seed(
        master,
        model,
        spec.method,
        combo,
        config.clusterer.method,
    ));
    let (labels, report) = cluster_and_score(&coords, &clusterer, config.silhouette)?;
    Ok(RunOutput {
        coords,
        labels,
        report,
    })
}

/// Axes and shared hyperparameters of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub reducers: Vec<ReducerMethod>,
    pub combos: Vec<FeatureCombo>,
    pub clusterers: Vec<ClusterMethod>,
    /// Hyperparameter template for both reducers; its `method` is replaced per cell.
    pub reduction: TwoStageSpec,
    /// Hyperparameter template for every clusterer; `method` and `seed` are replaced per cell.
    pub clustering: ClustererSpec,
    pub master_seed: u64,
    pub workers: usize,
    pub silhouette: SilhouetteOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            reducers: ReducerMethod::ALL.to_vec(),
            combos: FeatureCombo::ALL.to_vec(),
            clusterers: ClusterMethod::ALL.to_vec(),
            reduction: TwoStageSpec::new(ReducerMethod::Tsne),
            clustering: ClustererSpec::new(ClusterMethod::KMeans),
            master_seed: 0,
            workers: 1,
            silhouette: SilhouetteOptions::default(),
        }
    }
}

impl SweepConfig {
    /// The single-run config of one cell.
    pub fn cell_config(
        &self,
        reducer: ReducerMethod,
        combo: FeatureCombo,
        clusterer: ClusterMethod,
    ) -> PipelineConfig {
        let mut reduction = self.reduction.clone();
        reduction.method = reducer;
        let mut clustering = self.clustering.clone();
        clustering.method = clusterer;
        PipelineConfig {
            combo,
            reducer: reduction,
            clusterer: clustering,
            master_seed: self.master_seed,
            silhouette: self.silhouette,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub silhouette: f64,
    pub n_clusters: usize,
    pub n_noise: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub model: String,
    pub reducer: ReducerMethod,
    pub combo: FeatureCombo,
    pub clusterer: ClusterMethod,
    pub outcome: Result<CellScore, PipelineError>,
    /// Wall time of the cell's stage-2 reduction plus clustering and scoring.
    pub seconds: f64,
}

impl SweepCell {
    pub fn score(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|s| s.silhouette)
    }

    /// Everything but the wall time.
    pub fn same_outcome(&self, other: &SweepCell) -> bool {
        self.model == other.model
            && self.reducer == other.reducer
            && self.combo == other.combo
            && self.clusterer == other.clusterer
            && self.outcome == other.outcome
    }
}

/// Scored cells in model → reducer → combo → clusterer order, plus the axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub models: Vec<String>,
    pub reducers: Vec<ReducerMethod>,
    pub combos: Vec<FeatureCombo>,
    pub clusterers: Vec<ClusterMethod>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(
        &self,
        model: &str,
        reducer: ReducerMethod,
        combo: FeatureCombo,
        clusterer: ClusterMethod,
    ) -> Option<&SweepCell> {
        self.cells.iter().find(|c| {
            c.model == model && c.reducer == reducer && c.combo == combo && c.clusterer == clusterer
        })
    }

    /// The best-scoring cell; ties go to the earliest cell.
    pub fn best(&self) -> Option<&SweepCell> {
        best_of(self.cells.iter())
    }

    /// The best cell of one table column (reducer × combo).
    pub fn best_in_column(
        &self,
        reducer: ReducerMethod,
        combo: FeatureCombo,
    ) -> Option<&SweepCell> {
        best_of(
            self.cells
                .iter()
                .filter(|c| c.reducer == reducer && c.combo == combo),
        )
    }

    /// Equality ignoring wall times.
    pub fn same_outcomes(&self, other: &SweepResult) -> bool {
        self.models == other.models
            && self.reducers == other.reducers
            && self.combos == other.combos
            && self.clusterers == other.clusterers
            && self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.same_outcome(b))
    }
}

fn best_of<'a>(cells: impl Iterator<Item = &'a SweepCell>) -> Option<&'a SweepCell> {
    let mut best: Option<(&SweepCell, f64)> = None;
    for c in cells {
        if let Some(s) = c.score() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
    }
    best.map(|(c, _)| c)
}

type Shared = Result<Arc<DenseMatrix>, PipelineError>;

/// Runs every (model, reducer, combo, clusterer) cell.
///
/// Stage-1 reductions are computed once and shared by all cells that use
/// them; stage-2 reductions once per (model, reducer, combo). Work runs on a
/// pool of `config.workers` threads; results do not depend on the worker
/// count. A failing cell records its error and the sweep continues.
pub fn run_sweep(
    models: &[Embeddings],
    corpus: &Corpus,
    config: &SweepConfig,
) -> Result<SweepResult, PipelineError> {
    if models.is_empty() {
        return Err(PipelineError::NoModels);
    }
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|o| o.label == m.label) {
            return Err(PipelineError::DuplicateModel(m.label.clone()));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| sweep_in_pool(models, corpus, config))
}

fn sweep_in_pool(
    models: &[Embeddings],
    corpus: &Corpus,
    config: &SweepConfig,
) -> Result<SweepResult, PipelineError> {
    let master = config.master_seed;
    let spec_for = |reducer: ReducerMethod| {
        let mut s = config.reduction.clone();
        s.method = reducer;
        s
    };

    // stage 1: (model index or shared, reducer, block)
    let mut stage1_jobs: Vec<(Option<usize>, ReducerMethod, BlockKind)> = Vec::new();
    for &r in &config.reducers {
        for mi in 0..models.len() {
            stage1_jobs.push((Some(mi), r, BlockKind::Embedding));
        }
        if config.combos.iter().any(|c| c.uses_go()) {
            stage1_jobs.push((None, r, BlockKind::Go));
        }
        if config.combos.iter().any(|c| c.uses_acronyms()) {
            stage1_jobs.push((None, r, BlockKind::Acronyms));
        }
    }
    let stage1_out: BTreeMap<_, Shared> = stage1_jobs
        .par_iter()
        .map(|&(mi, r, block)| {
            let emb = &models[mi.unwrap_or(0)];
            let checked = if mi.is_some() {
                check_rows(corpus, emb)
            } else {
                Ok(())
            };
            let out = checked
                .and_then(|_| stage1(corpus, emb, &spec_for(r), block, master))
                .map(Arc::new);
            ((mi, r, block), out)
        })
        .collect();

    // stage 2: (model, reducer, combo)
    let mut stage2_jobs = Vec::new();
    for mi in 0..models.len() {
        for &r in &config.reducers {
            for &c in &config.combos {
                stage2_jobs.push((mi, r, c));
            }
        }
    }
    let stage2_out: BTreeMap<_, (Shared, f64)> = stage2_jobs
        .par_iter()
        .map(|&(mi, r, combo)| {
            let start = Instant::now();
            let fetch = |key| stage1_out[&key].clone();
            let out = (|| {
                let embedding = fetch((Some(mi), r, BlockKind::Embedding))?;
                let go = combo
                    .uses_go()
                    .then(|| fetch((None, r, BlockKind::Go)))
                    .transpose()?;
                let acronyms = combo
                    .uses_acronyms()
                    .then(|| fetch((None, r, BlockKind::Acronyms)))
                    .transpose()?;
                let blocks = Stage1Blocks {
                    embedding: (*embedding).clone(),
                    go: go.map(|m| (*m).clone()),
                    acronyms: acronyms.map(|m| (*m).clone()),
                };
                let seed = stage2_seed(master, &models[mi].label, r, combo);
                Ok(Arc::new(reduce_stage2(&blocks, combo, &spec_for(r), seed)?))
            })();
            ((mi, r, combo), (out, start.elapsed().as_secs_f64()))
        })
        .collect();

    // cells
    let mut cell_jobs = Vec::new();
    for &(mi, r, c) in &stage2_jobs {
        for &k in &config.clusterers {
            cell_jobs.push((mi, r, c, k));
        }
    }
    let cells: Vec<SweepCell> = cell_jobs
        .par_iter()
        .map(|&(mi, reducer, combo, clusterer)| {
            let start = Instant::now();
            let model = &models[mi].label;
            let (coords, stage2_secs) = &stage2_out[&(mi, reducer, combo)];
            let outcome = coords.clone().and_then(|coords| {
                let mut spec = config.clustering.clone();
                spec.method = clusterer;
                spec.seed = cluster_seed(master, model, reducer, combo, clusterer);
                let (labels, report) = cluster_and_score(&coords, &spec, config.silhouette)?;
                Ok(CellScore {
                    silhouette: report.score,
                    n_clusters: labels.n_clusters(),
                    n_noise: labels.n_noise(),
                })
            });
            SweepCell {
                model: model.clone(),
                reducer,
                combo,
                clusterer,
                outcome,
                seconds: stage2_secs + start.elapsed().as_secs_f64(),
            }
        })
        .collect();

    Ok(SweepResult {
        models: models.iter().map(|m| m.label.clone()).collect(),
        reducers: config.reducers.clone(),
        combos: config.combos.clone(),
        clusterers: config.clusterers.clone(),
        cells,
    })
}
