use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fixture60")
}

fn genesem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genesem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn inputs() -> Vec<String> {
    let d = data();
    vec![
        "--genes".into(),
        s(&d.join("genes.txt")),
        "--annotations".into(),
        s(&d.join("go.tsv")),
        "--descriptions".into(),
        s(&d.join("descriptions.tsv")),
        "--embeddings".into(),
        format!("BaseBERT={}", s(&d.join("emb_BaseBERT.tsv"))),
    ]
}

fn with(cmd: &str, extra: &[&str]) -> Vec<String> {
    let mut v = vec![cmd.to_string()];
    v.extend(inputs());
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(args: &[String]) -> Output {
    genesem(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_reports_counts() {
    let o = run(&with("validate", &[]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let first = out.lines().next().unwrap();
    let fields: Vec<&str> = first.split(' ').collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[0], "genes=60");
    assert!(fields[1].starts_with("go_terms="));
    assert!(fields[2].starts_with("acronyms="));
    assert_eq!(fields[3], "dims=32");
}

#[test]
fn usage_errors_exit_2() {
    let o = genesem(&["validate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(genesem(&[]).status.code(), Some(2));
    assert_eq!(
        run(&with("run", &["--out", "/tmp/x", "--reducer", "pca"]))
            .status
            .code(),
        Some(2)
    );
    // --genes missing entirely
    assert_eq!(genesem(&["validate"]).status.code(), Some(2));
    assert_eq!(genesem(&["--help"]).status.code(), Some(0));
}

#[test]
fn input_errors_exit_1_and_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("go.tsv");
    fs::write(&bad, "SYN0001\tGO:0001001\tC\nSYN0002\tnot-a-go-id\n").unwrap();
    let mut args = with("validate", &[]);
    args[4] = s(&bad);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("go.tsv") && err.contains('2'), "{err}");

    let mut args = with("validate", &[]);
    args[2] = s(&dir.path().join("missing.txt"));
    assert_eq!(run(&args).status.code(), Some(1));
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_fixed_layout_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&with(
            "run",
            &[
                "--out",
                &s(out),
                "--k",
                "3",
                "--seed",
                "5",
                "--combo",
                "go_terms",
            ],
        ));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let fa = read_dir(&a);
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "clusters.svg",
            "coords.csv",
            "enrichment.txt",
            "labels.csv",
            "manifest.json",
            "scores.csv"
        ]
    );
    for (x, y) in fa.iter().zip(read_dir(&b)) {
        if x.0 != "manifest.json" {
            assert_eq!(x, &y, "{} differs between runs", x.0);
        }
    }
    let labels = fs::read_to_string(a.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 61);
    let svg = fs::read_to_string(a.join("clusters.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 5);
    assert_eq!(manifest["config"]["k"], 3);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 4);
    for out in manifest["outputs"].as_array().unwrap() {
        let bytes = fs::read(a.join(out["path"].as_str().unwrap())).unwrap();
        let hex: String = sha256_hex(&bytes);
        assert_eq!(out["sha256"], hex);
    }

    // the manifest's config snapshot re-runs the job
    let cfg = tmp.path().join("again.json");
    fs::write(&cfg, manifest["config"].to_string()).unwrap();
    let c = tmp.path().join("c");
    let o = genesem(&["run", "--config", &s(&cfg), "--out", &s(&c)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for (x, y) in fa.iter().zip(read_dir(&c)) {
        if x.0 != "manifest.json" {
            assert_eq!(x, &y);
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    // independent of the binary's implementation: shell out to sha256sum
    let tmp = tempfile::NamedTempFile::new().unwrap();
    fs::write(tmp.path(), bytes).unwrap();
    let out = Command::new("sha256sum").arg(tmp.path()).output().unwrap();
    String::from_utf8(out.stdout)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn run_takes_one_model() {
    let d = data();
    let mut args = with("run", &["--out", "/tmp/unused"]);
    args.push("--embeddings".into());
    args.push(format!("Other={}", s(&d.join("emb_BaseBERT.tsv"))));
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let d = data();
    let cfg = serde_json::json!({
        "genes": s(&d.join("genes.txt")),
        "annotations": s(&d.join("go.tsv")),
        "descriptions": s(&d.join("descriptions.tsv")),
        "embeddings": [{"label": "BaseBERT", "path": s(&d.join("emb_BaseBERT.tsv"))}],
        "reducer": "tsne",
        "clusterer": "agg_ward",
        "k": 4
    });
    let path = tmp.path().join("cfg.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = tmp.path().join("o");
    let o = genesem(&["run", "--config", &s(&path), "--k", "2", "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    let row = scores.lines().nth(1).unwrap();
    assert!(
        row.starts_with("BaseBERT,tsne,go_terms_and_acronyms,agg_ward,"),
        "{row}"
    );
    assert_eq!(row.split(',').nth(5), Some("2"));

    fs::write(&path, "{\"genes\": 1, \"bogus\": true}").unwrap();
    assert_eq!(
        genesem(&["validate", "--config", &s(&path)]).status.code(),
        Some(1)
    );
}

#[test]
fn sweep_is_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for workers in ["1", "3"] {
        let out = tmp.path().join(workers);
        let o = run(&with(
            "sweep",
            &[
                "--out",
                &s(&out),
                "--workers",
                workers,
                "--clusterer",
                "kmeans",
                "--clusterer",
                "hdbscan",
                "--k",
                "3",
            ],
        ));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outs.push(out);
    }
    for f in ["scores.csv", "table.txt"] {
        assert_eq!(
            fs::read(outs[0].join(f)).unwrap(),
            fs::read(outs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let scores = fs::read_to_string(outs[0].join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 2 * 3 * 2);
    assert!(outs[0].join("best_acronyms_umap.svg").exists());
    assert!(outs[0].join("clusters.svg").exists());
}

#[test]
fn encode_writes_vocabularies() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&with("encode", &["--out", &s(tmp.path())]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let go = fs::read_to_string(tmp.path().join("go_vocab.tsv")).unwrap();
    assert!(go.starts_with("term\taspect\tgenes\n"));
    let acr = fs::read_to_string(tmp.path().join("acronym_vocab.tsv")).unwrap();
    assert!(acr.lines().any(|l| l.starts_with("NFK\t")));
    let stats = fs::read_to_string(tmp.path().join("encode_stats.txt")).unwrap();
    assert!(stats.starts_with("genes=60\n"));
    assert!(tmp.path().join("manifest.json").exists());
}
