use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use genesem::encode::FeatureCombo;
use genesem::ingest::{
    format_f64, parse_descriptions, parse_gene_list, parse_go_annotations, AnnotationStore,
    Descriptions, GeneSet, GoAnnotations,
};
use genesem::pipeline::{
    cluster_enrichment_report, emit_scatter_svg, emit_sweep_table, emit_sweep_table_timed,
    run_pipeline, run_sweep, CellScore, Corpus, Embeddings, PipelineConfig, SweepCell, SweepConfig,
    SweepResult,
};
use genesem::reduce::ReducerMethod;
use genesem::{ClusterLabels, DenseMatrix};

use crate::config::{FileConfig, Settings};
use crate::manifest::{digest_file, now, CellTiming, FileDigest, OutDir, RunManifest};
use crate::CliError;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

struct Loaded {
    corpus: Corpus,
    models: Vec<Embeddings>,
    digests: Vec<FileDigest>,
}

fn load(settings: &Settings) -> Result<Loaded, CliError> {
    let mut digests = vec![digest_file(&settings.genes)?];
    let genes: GeneSet =
        parse_gene_list(&read(&settings.genes)?).map_err(|e| input_err(&settings.genes, e))?;
    let go = match &settings.annotations {
        Some(p) => {
            digests.push(digest_file(p)?);
            parse_go_annotations(&read(p)?, &genes).map_err(|e| input_err(p, e))?
        }
        None => GoAnnotations {
            terms: vec![Vec::new(); genes.len()],
            ..GoAnnotations::default()
        },
    };
    let descriptions = match &settings.descriptions {
        Some(p) => {
            digests.push(digest_file(p)?);
            parse_descriptions(&read(p)?, &genes).map_err(|e| input_err(p, e))?
        }
        None => Descriptions {
            texts: vec![String::new(); genes.len()],
            skipped_rows: 0,
        },
    };
    let store = AnnotationStore::new(genes, go, descriptions)
        .map_err(|e| CliError::Input(e.to_string()))?;
    if store.skipped_annotation_rows() > 0 {
        eprintln!(
            "note: {} annotation rows name genes outside the gene list",
            store.skipped_annotation_rows()
        );
    }
    if store.skipped_description_rows() > 0 {
        eprintln!(
            "note: {} description rows name genes outside the gene list",
            store.skipped_description_rows()
        );
    }
    let corpus = Corpus::new(store);
    let mut models = Vec::new();
    for m in &settings.embeddings {
        if models.iter().any(|e: &Embeddings| e.label == m.label) {
            return Err(CliError::Usage(format!(
                "model label `{}` given twice",
                m.label
            )));
        }
        digests.push(digest_file(&m.path)?);
        models.push(
            Embeddings::load(m.label.clone(), &m.path, &corpus)
                .map_err(|e| CliError::Input(e.to_string()))?,
        );
    }
    Ok(Loaded {
        corpus,
        models,
        digests,
    })
}

fn manifest(command: &'static str, settings: &Settings, inputs: Vec<FileDigest>) -> RunManifest {
    RunManifest {
        tool: "genesem",
        version: env!("CARGO_PKG_VERSION"),
        command,
        master_seed: settings.seed,
        config: settings.snapshot(),
        inputs,
        outputs: Vec::new(),
        started_at: now(),
        finished_at: String::new(),
        cells: Vec::new(),
    }
}

pub fn validate(cfg: &FileConfig) -> Result<(), CliError> {
    let settings = Settings::resolve(cfg)?;
    let loaded = load(&settings)?;
    let f = &loaded.corpus.features;
    let dims = loaded.models.first().map_or(0, |m| m.matrix.n_cols());
    println!(
        "genes={} go_terms={} acronyms={} dims={}",
        loaded.corpus.n_genes(),
        f.go_vocab.len(),
        f.acronym_vocab.len(),
        dims
    );
    for m in &loaded.models {
        println!(
            "model {} rows={} dims={}",
            m.label,
            m.matrix.n_rows(),
            m.matrix.n_cols()
        );
    }
    Ok(())
}

pub fn encode(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let settings = Settings::resolve(cfg)?;
    let loaded = load(&settings)?;
    let store = &loaded.corpus.store;
    let f = &loaded.corpus.features;
    let mut dir = OutDir::create(out)?;

    let mut go = String::from("term\taspect\tgenes\n");
    for (j, term) in f.go_vocab.tokens().iter().enumerate() {
        let count = (0..f.go.n_rows()).filter(|&i| f.go.get(i, j)).count();
        let aspect = store
            .aspect(term)
            .map_or(String::new(), |a| a.letter().to_string());
        let _ = writeln!(go, "{term}\t{aspect}\t{count}");
    }
    dir.write("go_vocab.tsv", &go)?;

    let mut acr = String::from("token\tgenes\n");
    for (j, tok) in f.acronym_vocab.tokens().iter().enumerate() {
        let count = (0..f.acronyms.n_rows())
            .filter(|&i| f.acronyms.get(i, j))
            .count();
        let _ = writeln!(acr, "{tok}\t{count}");
    }
    dir.write("acronym_vocab.tsv", &acr)?;

    let n = loaded.corpus.n_genes();
    let mean = |m: &genesem::SparseBinaryMatrix| {
        (0..m.n_rows()).map(|i| m.popcount(i)).sum::<usize>() as f64 / n as f64
    };
    let without =
        |m: &genesem::SparseBinaryMatrix| (0..m.n_rows()).filter(|&i| m.popcount(i) == 0).count();
    let stats = format!(
        "genes={n}\ngo_terms={}\nacronyms={}\nmean_go_terms_per_gene={:.3}\nmean_acronyms_per_gene={:.3}\ngenes_without_go_terms={}\ngenes_without_acronyms={}\n",
        f.go_vocab.len(),
        f.acronym_vocab.len(),
        mean(&f.go),
        mean(&f.acronyms),
        without(&f.go),
        without(&f.acronyms),
    );
    dir.write("encode_stats.txt", &stats)?;
    dir.finish(manifest("encode", &settings, loaded.digests))
}

fn coords_csv(coords: &DenseMatrix, genes: &GeneSet) -> String {
    let mut out = String::from("gene,x,y\n");
    for (g, row) in genes.iter().zip(coords.rows()) {
        let _ = writeln!(out, "{g},{},{}", format_f64(row[0]), format_f64(row[1]));
    }
    out
}

/// Clusters numbered from 1 as in the plot and report; noise is -1.
fn labels_csv(labels: &ClusterLabels, genes: &GeneSet) -> String {
    let mut out = String::from("gene,cluster\n");
    for (g, &l) in genes.iter().zip(labels.labels()) {
        let shown = if l < 0 { -1 } else { l + 1 };
        let _ = writeln!(out, "{g},{shown}");
    }
    out
}

fn cell_config(
    settings: &Settings,
    reducer: ReducerMethod,
    combo: FeatureCombo,
    clusterer: genesem::ClusterMethod,
) -> PipelineConfig {
    sweep_config(settings).cell_config(reducer, combo, clusterer)
}

fn sweep_config(settings: &Settings) -> SweepConfig {
    SweepConfig {
        reducers: settings.reducers.clone(),
        combos: settings.combos.clone(),
        clusterers: settings.clusterers.clone(),
        reduction: settings.reduction.clone(),
        clustering: settings.clustering.clone(),
        master_seed: settings.seed,
        workers: settings.workers,
        silhouette: settings.silhouette,
    }
}

pub fn run(cfg: &FileConfig, out: &Path) -> Result<(), CliError> {
    let settings = Settings::resolve(cfg)?;
    if settings.embeddings.len() != 1 {
        return Err(CliError::Usage(format!(
            "`run` takes exactly one --embeddings LABEL=PATH, got {}",
            settings.embeddings.len()
        )));
    }
    let loaded = load(&settings)?;
    let model = &loaded.models[0];
    let corpus = &loaded.corpus;
    let config = cell_config(
        &settings,
        settings.reducer,
        settings.combo,
        settings.clusterer,
    );
    eprintln!(
        "running {} / {} / {} / {}",
        model.label,
        settings.reducer.title(),
        settings.combo.title(),
        settings.clusterer.title()
    );
    let start = std::time::Instant::now();
    let result =
        run_pipeline(&config, corpus, model).map_err(|e| CliError::Input(e.to_string()))?;
    let seconds = start.elapsed().as_secs_f64();
    let genes = corpus.store.genes();

    let mut dir = OutDir::create(out)?;
    let one = SweepResult {
        models: vec![model.label.clone()],
        reducers: vec![settings.reducer],
        combos: vec![settings.combo],
        clusterers: vec![settings.clusterer],
        cells: vec![SweepCell {
            model: model.label.clone(),
            reducer: settings.reducer,
            combo: settings.combo,
            clusterer: settings.clusterer,
            outcome: Ok(CellScore {
                silhouette: result.report.score,
                n_clusters: result.labels.n_clusters(),
                n_noise: result.labels.n_noise(),
            }),
            seconds,
        }],
    };
    let (csv, _) = emit_sweep_table(&one);
    dir.write("scores.csv", &csv)?;
    dir.write("coords.csv", &coords_csv(&result.coords, genes))?;
    dir.write("labels.csv", &labels_csv(&result.labels, genes))?;
    let svg = emit_scatter_svg(&result.coords, &result.labels, genes.ids())
        .map_err(|e| CliError::Input(e.to_string()))?;
    dir.write("clusters.svg", &svg)?;
    dir.write(
        "enrichment.txt",
        &cluster_enrichment_report(&result.labels, &corpus.features),
    )?;
    eprintln!(
        "silhouette={} clusters={} noise={}",
        genesem::pipeline::format_score(result.report.score),
        result.labels.n_clusters(),
        result.labels.n_noise()
    );
    let mut m = manifest("run", &settings, loaded.digests);
    m.cells = timings(&one);
    dir.finish(m)
}

fn timings(result: &SweepResult) -> Vec<CellTiming> {
    result
        .cells
        .iter()
        .map(|c| CellTiming {
            model: c.model.clone(),
            reducer: c.reducer.key().into(),
            combo: c.combo.key().into(),
            clusterer: c.clusterer.key().into(),
            seconds: c.seconds,
            error: c.outcome.as_ref().err().map(|e| e.to_string()),
        })
        .collect()
}

pub fn sweep(cfg: &FileConfig, out: &Path, timed: bool) -> Result<(), CliError> {
    let settings = Settings::resolve(cfg)?;
    if settings.embeddings.is_empty() {
        return Err(CliError::Usage(
            "`sweep` needs at least one --embeddings LABEL=PATH".into(),
        ));
    }
    let loaded = load(&settings)?;
    let corpus = &loaded.corpus;
    let config = sweep_config(&settings);
    let total =
        loaded.models.len() * config.reducers.len() * config.combos.len() * config.clusterers.len();
    eprintln!("sweeping {total} cells on {} worker(s)", config.workers);
    let result =
        run_sweep(&loaded.models, corpus, &config).map_err(|e| CliError::Input(e.to_string()))?;
    let failed = result.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} cell(s) failed; see scores.csv and manifest.json");
    }

    let mut dir = OutDir::create(out)?;
    let (csv, table) = if timed {
        emit_sweep_table_timed(&result)
    } else {
        emit_sweep_table(&result)
    };
    dir.write("scores.csv", &csv)?;
    dir.write("table.txt", &table)?;

    // plots of the best cells, recomputed as single runs (same seeds, same result)
    let genes = corpus.store.genes();
    let model = |label: &str| {
        loaded
            .models
            .iter()
            .find(|m| m.label == label)
            .expect("sweep model")
    };
    let render = |cell: &SweepCell| -> Result<(String, String), CliError> {
        let cfg = config.cell_config(cell.reducer, cell.combo, cell.clusterer);
        let run = run_pipeline(&cfg, corpus, model(&cell.model))
            .map_err(|e| CliError::Input(e.to_string()))?;
        let svg = emit_scatter_svg(&run.coords, &run.labels, genes.ids())
            .map_err(|e| CliError::Input(e.to_string()))?;
        Ok((
            svg,
            cluster_enrichment_report(&run.labels, &corpus.features),
        ))
    };
    if let Some(best) = result.best() {
        let (svg, enrichment) = render(best)?;
        dir.write("clusters.svg", &svg)?;
        dir.write("enrichment.txt", &enrichment)?;
    }
    for &combo in &result.combos {
        for &reducer in &result.reducers {
            if let Some(best) = result.best_in_column(reducer, combo) {
                let (svg, _) = render(best)?;
                dir.write(&format!("best_{}_{}.svg", combo.key(), reducer.key()), &svg)?;
            }
        }
    }
    let mut m = manifest("sweep", &settings, loaded.digests);
    m.cells = timings(&result);
    dir.finish(m)
}
