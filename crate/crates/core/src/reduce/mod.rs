//! Nonlinear dimensionality reduction (exact t-SNE and UMAP) and the
//! two-stage block reduction used by the pipeline.
//!
//! Both reducers work from a full pairwise Euclidean distance matrix, so a
//! sparse binary block never has to be densified to be reduced.

mod tsne;
mod umap;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encode::{assemble_feature_blocks, EncodeError, FeatureCombo, SparseBinaryMatrix};
use crate::matrix::{DenseMatrix, DistanceMatrix};

pub use tsne::{
    calibrate_affinities, conditional_affinities, kl_divergence, kl_gradient, tsne_embed,
    tsne_embed_traced, tsne_from_distances, TsneParams, TsneTrace,
};
pub use umap::{
    build_fuzzy_graph, fit_embedding_curve, fuzzy_graph_from_distances, nearest_neighbors,
    smooth_knn_calibration, umap_embed, umap_from_distances, CurveFit, UmapParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError {
    #[error("bandwidth calibration failed for row {0}")]
    CalibrationFailed(usize),
    #[error("layout diverged to non-finite coordinates")]
    NonFiniteState,
    #[error("embedding curve fit failed (rms residual {0:.3e})")]
    FitFailed(f64),
    #[error("invalid reducer spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReducerMethod {
    Tsne,
    Umap,
}

impl ReducerMethod {
    pub const ALL: [ReducerMethod; 2] = [Self::Tsne, Self::Umap];

    pub fn key(self) -> &'static str {
        match self {
            Self::Tsne => "tsne",
            Self::Umap => "umap",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::Tsne => "t-SNE",
            Self::Umap => "UMAP",
        }
    }
}

impl fmt::Display for ReducerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ReducerMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "tsne" => Ok(Self::Tsne),
            "umap" => Ok(Self::Umap),
            _ => Err(format!("unknown reducer `{s}`")),
        }
    }
}

/// One reduction call: method, output width, hyperparameters and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducerSpec {
    pub method: ReducerMethod,
    pub target_dims: usize,
    pub tsne: TsneParams,
    pub umap: UmapParams,
    pub seed: u64,
}

impl ReducerSpec {
    pub fn new(method: ReducerMethod, target_dims: usize, seed: u64) -> Self {
        Self {
            method,
            target_dims,
            tsne: TsneParams::default(),
            umap: UmapParams::default(),
            seed,
        }
    }

    fn validate(&self, n_rows: usize, input_dims: usize) -> Result<(), ReduceError> {
        if self.target_dims == 0 {
            return Err(ReduceError::InvalidSpec(
                "target_dims must be positive".into(),
            ));
        }
        if self.target_dims >= input_dims {
            return Err(ReduceError::InvalidSpec(format!(
                "target_dims {} must be below the input width {input_dims}",
                self.target_dims
            )));
        }
        match self.method {
            ReducerMethod::Tsne => self.tsne.validate(n_rows),
            ReducerMethod::Umap => self.umap.validate(n_rows),
        }
    }
}

/// Affinities between points: symmetric, non-negative, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub(crate) fn from_raw(n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * n);
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A block entering stage 1: dense embeddings or a binary presence matrix.
#[derive(Debug, Clone, Copy)]
pub enum Block<'a> {
    Dense(&'a DenseMatrix),
    Binary(&'a SparseBinaryMatrix),
}

impl Block<'_> {
    pub fn n_rows(&self) -> usize {
        match self {
            Block::Dense(m) => m.n_rows(),
            Block::Binary(m) => m.n_rows(),
        }
    }

    pub fn n_cols(&self) -> usize {
        match self {
            Block::Dense(m) => m.n_cols(),
            Block::Binary(m) => m.n_cols(),
        }
    }

    pub fn distances(&self) -> DistanceMatrix {
        match self {
            Block::Dense(m) => m.pairwise_distances(),
            Block::Binary(m) => m.pairwise_distances(),
        }
    }

    fn to_dense(self) -> DenseMatrix {
        match self {
            Block::Dense(m) => m.clone(),
            Block::Binary(m) => m.to_dense(),
        }
    }
}

/// Reduces one block to `spec.target_dims` columns.
///
/// A block that is already at most `target_dims` wide is returned unchanged
/// (densified if binary).
pub fn reduce_block(block: Block<'_>, spec: &ReducerSpec) -> Result<DenseMatrix, ReduceError> {
    if block.n_cols() <= spec.target_dims {
        return Ok(block.to_dense());
    }
    spec.validate(block.n_rows(), block.n_cols())?;
    let distances = block.distances();
    match spec.method {
        ReducerMethod::Tsne => {
            tsne_from_distances(&distances, spec.target_dims, &spec.tsne, spec.seed).map(|(m, _)| m)
        }
        ReducerMethod::Umap => {
            umap_from_distances(&distances, spec.target_dims, &spec.umap, spec.seed)
        }
    }
}

/// Method, widths and hyperparameters shared by both stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageSpec {
    pub method: ReducerMethod,
    pub stage1_dims: usize,
    pub stage2_dims: usize,
    pub tsne: TsneParams,
    pub umap: UmapParams,
}

impl TwoStageSpec {
    pub fn new(method: ReducerMethod) -> Self {
        Self {
            method,
            stage1_dims: 50,
            stage2_dims: 2,
            tsne: TsneParams::default(),
            umap: UmapParams::default(),
        }
    }

    pub fn stage(&self, target_dims: usize, seed: u64) -> ReducerSpec {
        ReducerSpec {
            method: self.method,
            target_dims,
            tsne: self.tsne.clone(),
            umap: self.umap.clone(),
            seed,
        }
    }
}

/// Seeds for the three stage-1 blocks and the stage-2 reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub embedding: u64,
    pub go: u64,
    pub acronyms: u64,
    pub stage2: u64,
}

impl StageSeeds {
    /// Independent per-stage seeds derived from one base seed.
    pub fn from_base(seed: u64) -> Self {
        let mut sm = SplitMix64(seed);
        Self {
            embedding: sm.next(),
            go: sm.next(),
            acronyms: sm.next(),
            stage2: sm.next(),
        }
    }
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Stage-1 outputs for the blocks a combo needs.
#[derive(Debug, Clone)]
pub struct Stage1Blocks {
    pub embedding: DenseMatrix,
    pub go: Option<DenseMatrix>,
    pub acronyms: Option<DenseMatrix>,
}

/// Stage 2: concatenate the reduced blocks per `combo` and reduce to
/// `spec.stage2_dims` with the same method.
pub fn reduce_stage2(
    blocks: &Stage1Blocks,
    combo: FeatureCombo,
    spec: &TwoStageSpec,
    seed: u64,
) -> Result<DenseMatrix, ReduceError> {
    let empty = DenseMatrix::zeros(blocks.embedding.n_rows(), 0);
    let missing = |name: &str| ReduceError::InvalidSpec(format!("combo needs the {name} block"));
    let go = match (combo.uses_go(), &blocks.go) {
        (true, Some(m)) => m,
        (true, None) => return Err(missing("GO")),
        (false, _) => &empty,
    };
    let acr = match (combo.uses_acronyms(), &blocks.acronyms) {
        (true, Some(m)) => m,
        (true, None) => return Err(missing("acronym")),
        (false, _) => &empty,
    };
    let joined = assemble_feature_blocks(combo, &blocks.embedding, go, acr)?;
    reduce_block(Block::Dense(&joined), &spec.stage(spec.stage2_dims, seed))
}

/// Full two-stage reduction: each block selected by `combo` is reduced to
/// `stage1_dims` independently, the results are concatenated, and the
/// concatenation is reduced to `stage2_dims` with the same method.
pub fn reduce_two_stage(
    embedding: &DenseMatrix,
    go: &SparseBinaryMatrix,
    acronyms: &SparseBinaryMatrix,
    combo: FeatureCombo,
    spec: &TwoStageSpec,
    seeds: StageSeeds,
) -> Result<DenseMatrix, ReduceError> {
    let n = embedding.n_rows();
    for rows in [go.n_rows(), acronyms.n_rows()] {
        if rows != n {
            return Err(EncodeError::ShapeMismatch {
                expected: n,
                got: rows,
            }
            .into());
        }
    }
    let stage1 = |block: Block<'_>, seed| reduce_block(block, &spec.stage(spec.stage1_dims, seed));
    let blocks = Stage1Blocks {
        embedding: stage1(Block::Dense(embedding), seeds.embedding)?,
        go: combo
            .uses_go()
            .then(|| stage1(Block::Binary(go), seeds.go))
            .transpose()?,
        acronyms: combo
            .uses_acronyms()
            .then(|| stage1(Block::Binary(acronyms), seeds.acronyms))
            .transpose()?,
    };
    reduce_stage2(&blocks, combo, spec, seeds.stage2)
}
