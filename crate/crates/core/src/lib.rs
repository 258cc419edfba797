//! Semantic clustering of gene sets.
//!
//! Genes are encoded as binary GO-term and acronym vectors plus a dense text
//! embedding, reduced in two stages with t-SNE or UMAP, clustered in 2-D and
//! scored with the silhouette coefficient. [`pipeline`] runs single
//! configurations and full factorial sweeps.

pub mod cluster;
pub mod encode;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod reduce;
pub mod synthetic;

pub use cluster::{ClusterLabels, ClusterMethod, ClustererSpec};
pub use encode::{FeatureCombo, SparseBinaryMatrix, Vocabulary};
pub use ingest::{AnnotationStore, GeneSet};
pub use matrix::{DenseMatrix, DistanceMatrix};
pub use metrics::{SilhouetteOptions, SilhouetteReport};
pub use pipeline::{
    run_pipeline, run_sweep, Corpus, Embeddings, PipelineConfig, PipelineError, SweepConfig,
    SweepResult,
};
pub use reduce::{ReducerMethod, ReducerSpec, TwoStageSpec};
