use std::path::Path;
use std::time::Instant;

use genesem::cluster::ClusterMethod;
use genesem::encode::FeatureCombo;
use genesem::ingest::IngestError;
use genesem::ingest::{parse_descriptions, parse_gene_list, parse_go_annotations, AnnotationStore};
use genesem::metrics::adjusted_rand_index;
use genesem::pipeline::{
    cluster_enrichment_report, emit_scatter_svg, emit_sweep_table, run_pipeline, run_sweep, Corpus,
    Embeddings, PipelineConfig, PipelineError, SweepConfig,
};
use genesem::reduce::ReducerMethod;
use genesem::synthetic::{generate, SyntheticSpec};

fn data_dir(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn fixture_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(
        ReducerMethod::Umap,
        FeatureCombo::GoTerms,
        ClusterMethod::KMeans,
    );
    cfg.clusterer.k = 3;
    cfg.master_seed = seed;
    cfg
}

#[test]
fn fixture_recovers_planted_groups() {
    let synth = generate(&SyntheticSpec::small());
    let (corpus, models) = synth.load();
    let planted: Vec<i32> = synth.groups.iter().map(|&g| g as i32).collect();
    let mut good = 0;
    for seed in 0..20 {
        let out = run_pipeline(&fixture_config(seed), &corpus, &models[0]).unwrap();
        assert_eq!((out.coords.n_rows(), out.coords.n_cols()), (60, 2));
        assert_eq!(out.labels.n_clusters(), 3);
        assert!(out.report.score.is_finite());
        let ari = adjusted_rand_index(out.labels.labels(), &planted);
        if ari >= 0.9 {
            good += 1;
        }
    }
    assert!(good >= 18, "{good}/20 seeds recovered the planted groups");
}

#[test]
fn run_is_repeatable() {
    let (corpus, models) = generate(&SyntheticSpec::small()).load();
    for reducer in ReducerMethod::ALL {
        let mut cfg = fixture_config(7);
        cfg.reducer.method = reducer;
        cfg.combo = FeatureCombo::GoTermsAndAcronyms;
        let a = run_pipeline(&cfg, &corpus, &models[0]).unwrap();
        let b = run_pipeline(&cfg, &corpus, &models[0]).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn missing_gene_in_embeddings_is_an_ingest_error() {
    let synth = generate(&SyntheticSpec::small());
    let (corpus, _) = synth.load();
    let dir = tempdir();
    let path = dir.join("emb.tsv");
    let text: String = synth.embeddings[0]
        .1
        .lines()
        .filter(|l| !l.starts_with("SYN0007\t"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&path, text).unwrap();
    let err = Embeddings::load("m", &path, &corpus).unwrap_err();
    assert_eq!(err.stage(), "ingest");
    match err {
        PipelineError::InputFile { source, .. } => {
            assert_eq!(source, IngestError::MissingGene("SYN0007".into()))
        }
        other => panic!("{other:?}"),
    }
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("genesem-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn sweep_cell_equals_single_run() {
    let (corpus, models) = generate(&SyntheticSpec::small()).load();
    let config = SweepConfig {
        reducers: vec![ReducerMethod::Umap],
        combos: vec![FeatureCombo::Acronyms],
        clusterers: vec![ClusterMethod::KMeans, ClusterMethod::AggWard],
        master_seed: 3,
        ..SweepConfig::default()
    };
    let result = run_sweep(&models, &corpus, &config).unwrap();
    assert_eq!(result.cells.len(), 2);
    for cell in &result.cells {
        let cfg = config.cell_config(cell.reducer, cell.combo, cell.clusterer);
        let out = run_pipeline(&cfg, &corpus, &models[0]).unwrap();
        assert_eq!(cell.score(), Some(out.report.score));
    }
}

#[test]
fn single_cell_sweep_and_empty_model_list() {
    let (corpus, models) = generate(&SyntheticSpec::small()).load();
    let config = SweepConfig {
        reducers: vec![ReducerMethod::Tsne],
        combos: vec![FeatureCombo::GoTerms],
        clusterers: vec![ClusterMethod::AggAverage],
        ..SweepConfig::default()
    };
    assert_eq!(run_sweep(&models, &corpus, &config).unwrap().cells.len(), 1);
    assert_eq!(
        run_sweep(&[], &corpus, &config).unwrap_err(),
        PipelineError::NoModels
    );
}

#[test]
fn failing_cell_does_not_abort_sweep() {
    let (corpus, models) = generate(&SyntheticSpec::small()).load();
    let mut config = SweepConfig {
        reducers: vec![ReducerMethod::Umap],
        combos: vec![FeatureCombo::GoTerms],
        clusterers: vec![ClusterMethod::KMeans, ClusterMethod::Hdbscan],
        ..SweepConfig::default()
    };
    // more points per cluster than there are genes: HDBSCAN cannot run
    config.clustering.min_cluster_size = 100;
    let result = run_sweep(&models, &corpus, &config).unwrap();
    assert!(result.cells[0].outcome.is_ok());
    let err = result.cells[1].outcome.as_ref().unwrap_err();
    assert_eq!(err.stage(), "cluster");
    let (csv, _) = emit_sweep_table(&result);
    assert!(csv.lines().nth(2).unwrap().contains(",ERR,"));
}

#[test]
fn worker_count_does_not_change_results() {
    let (corpus, models) = generate(&SyntheticSpec::small()).load();
    let base = SweepConfig {
        clusterers: vec![
            ClusterMethod::KMeans,
            ClusterMethod::Hdbscan,
            ClusterMethod::AggSingle,
        ],
        ..SweepConfig::default()
    };
    let serial = run_sweep(
        &models,
        &corpus,
        &SweepConfig {
            workers: 1,
            ..base.clone()
        },
    )
    .unwrap();
    let parallel = run_sweep(&models, &corpus, &SweepConfig { workers: 8, ..base }).unwrap();
    assert!(serial.same_outcomes(&parallel));
    assert_eq!(emit_sweep_table(&serial), emit_sweep_table(&parallel));
}

#[test]
fn bundled_data_matches_generator() {
    for (dir, spec) in [
        ("synthetic", SyntheticSpec::standard()),
        ("fixture60", SyntheticSpec::small()),
    ] {
        let synth = generate(&spec);
        let read = |f: &str| std::fs::read_to_string(data_dir(dir).join(f)).unwrap();
        assert_eq!(read("genes.txt"), synth.gene_list);
        assert_eq!(read("go.tsv"), synth.annotations);
        assert_eq!(read("descriptions.tsv"), synth.descriptions);
        assert_eq!(read("groups.tsv"), synth.groups_tsv());
        for (label, text) in &synth.embeddings {
            assert_eq!(&read(&format!("emb_{label}.tsv")), text, "{dir}/{label}");
        }
    }
}

#[test]
fn bundled_fixture_loads_from_files() {
    let dir = data_dir("fixture60");
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
    let genes = parse_gene_list(&read("genes.txt")).unwrap();
    let go = parse_go_annotations(&read("go.tsv"), &genes).unwrap();
    let desc = parse_descriptions(&read("descriptions.tsv"), &genes).unwrap();
    let corpus = Corpus::new(AnnotationStore::new(genes, go, desc).unwrap());
    let emb = Embeddings::load("BaseBERT", &dir.join("emb_BaseBERT.tsv"), &corpus).unwrap();
    let (ref_corpus, ref_models) = generate(&SyntheticSpec::small()).load();
    assert_eq!(emb, ref_models[0]);
    assert_eq!(corpus.store, ref_corpus.store);
}

#[test]
fn enrichment_ranks_planted_terms_first() {
    let synth = generate(&SyntheticSpec::small());
    let (corpus, models) = synth.load();
    let out = run_pipeline(&fixture_config(1), &corpus, &models[0]).unwrap();
    let report = cluster_enrichment_report(&out.labels, &corpus.features);
    assert_eq!(report.matches("cluster ").count(), 3);
    // every cluster's top GO term is one of the group-specific pools
    for block in report.split("cluster ").skip(1) {
        let top = block.lines().nth(2).unwrap().trim();
        assert!(!top.starts_with("GO:0009"), "{top}");
    }
    let svg = emit_scatter_svg(&out.coords, &out.labels, corpus.store.genes().ids()).unwrap();
    assert_eq!(svg.matches("<title>").count(), 60);
}

#[test]
fn full_sweep_timing() {
    let (corpus, models) = generate(&SyntheticSpec::standard()).load();
    let start = Instant::now();
    let result = run_sweep(
        &models,
        &corpus,
        &SweepConfig {
            workers: 4,
            ..SweepConfig::default()
        },
    )
    .unwrap();
    eprintln!("sweep: {:.1}s", start.elapsed().as_secs_f64());
    assert_eq!(result.cells.len(), 180);
    let (_, table) = emit_sweep_table(&result);
    eprintln!("{table}");
    for c in &result.cells {
        if let Err(e) = &c.outcome {
            eprintln!("{} {} {} {}: {e}", c.model, c.reducer, c.combo, c.clusterer);
        }
    }
}
