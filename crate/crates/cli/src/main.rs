//! `genesem`: encode, run, sweep and validate gene-set clustering pipelines.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{FileConfig, ModelEntry};
use genesem::cluster::ClusterMethod;
use genesem::encode::FeatureCombo;
use genesem::reduce::ReducerMethod;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "genesem", version, about = "Semantic clustering of gene sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode GO terms and mined acronyms; write vocabularies and stats.
    Encode(EncodeArgs),
    /// Run one pipeline variant.
    Run(RunArgs),
    /// Run the factorial sweep over models, reducers, combos and clusterers.
    Sweep(SweepArgs),
    /// Parse every input and report counts.
    Validate(InputArgs),
}

fn parse_model(s: &str) -> Result<ModelEntry, String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok(ModelEntry {
            label: label.to_string(),
            path: PathBuf::from(path),
        }),
        _ => Err(format!("expected LABEL=PATH, got `{s}`")),
    }
}

#[derive(Debug, Args)]
struct InputArgs {
    /// JSON config; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Gene list, one identifier per line.
    #[arg(long, value_name = "PATH")]
    genes: Option<PathBuf>,
    /// GO annotation TSV: gene, GO id, optional aspect letter.
    #[arg(long, value_name = "PATH")]
    annotations: Option<PathBuf>,
    /// Description TSV: gene, free text.
    #[arg(long, value_name = "PATH")]
    descriptions: Option<PathBuf>,
    /// Embedding file of one model, as LABEL=PATH; repeatable.
    #[arg(long = "embeddings", visible_alias = "models", value_name = "LABEL=PATH", value_parser = parse_model)]
    embeddings: Vec<ModelEntry>,
}

impl InputArgs {
    fn merged(&self) -> Result<FileConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(p) = &self.genes {
            cfg.genes = Some(p.clone());
        }
        if let Some(p) = &self.annotations {
            cfg.annotations = Some(p.clone());
        }
        if let Some(p) = &self.descriptions {
            cfg.descriptions = Some(p.clone());
        }
        if !self.embeddings.is_empty() {
            cfg.embeddings = self.embeddings.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    inputs: InputArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TuningArgs {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cluster count for k-means and agglomerative clustering.
    #[arg(long)]
    k: Option<usize>,
    /// Score HDBSCAN noise as one more cluster instead of leaving it out.
    #[arg(long)]
    include_noise_as_cluster: bool,
}

impl TuningArgs {
    fn apply(&self, cfg: &mut FileConfig) {
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(k) = self.k {
            cfg.k = Some(k);
        }
        if self.include_noise_as_cluster {
            cfg.include_noise_as_cluster = Some(true);
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// tsne or umap.
    #[arg(long)]
    reducer: Option<ReducerMethod>,
    /// acronyms, go_terms or go_terms_and_acronyms.
    #[arg(long)]
    combo: Option<FeatureCombo>,
    /// agg_single, agg_ward, agg_average, hdbscan or kmeans.
    #[arg(long)]
    clusterer: Option<ClusterMethod>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Restrict the reducer axis; repeatable.
    #[arg(long)]
    reducer: Vec<ReducerMethod>,
    /// Restrict the combo axis; repeatable.
    #[arg(long)]
    combo: Vec<FeatureCombo>,
    /// Restrict the clusterer axis; repeatable.
    #[arg(long)]
    clusterer: Vec<ClusterMethod>,
    /// Fill the `seconds` column of scores.csv (makes it run-dependent).
    #[arg(long)]
    timings: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(inputs) => commands::validate(&inputs.merged()?),
        Command::Encode(args) => commands::encode(&args.inputs.merged()?, &args.out),
        Command::Run(args) => {
            let mut cfg = args.inputs.merged()?;
            args.tuning.apply(&mut cfg);
            if let Some(r) = args.reducer {
                cfg.reducer = Some(r.key().into());
            }
            if let Some(c) = args.combo {
                cfg.combo = Some(c.key().into());
            }
            if let Some(c) = args.clusterer {
                cfg.clusterer = Some(c.key().into());
            }
            commands::run(&cfg, &args.out)
        }
        Command::Sweep(args) => {
            let mut cfg = args.inputs.merged()?;
            args.tuning.apply(&mut cfg);
            if let Some(w) = args.workers {
                cfg.workers = Some(w);
            }
            if !args.reducer.is_empty() {
                cfg.reducers = Some(args.reducer.iter().map(|r| r.key().into()).collect());
            }
            if !args.combo.is_empty() {
                cfg.combos = Some(args.combo.iter().map(|c| c.key().into()).collect());
            }
            if !args.clusterer.is_empty() {
                cfg.clusterers = Some(args.clusterer.iter().map(|c| c.key().into()).collect());
            }
            commands::sweep(&cfg, &args.out, args.timings)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `genesem --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
