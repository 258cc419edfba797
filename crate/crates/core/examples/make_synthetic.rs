//! Writes the bundled synthetic corpora.
//!
//! `cargo run -p genesem-core --example make_synthetic -- data`

use std::fs;
use std::path::Path;

use genesem::synthetic::{generate, SyntheticCorpus, SyntheticSpec};

fn write(dir: &Path, corpus: &SyntheticCorpus) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("genes.txt"), &corpus.gene_list)?;
    fs::write(dir.join("go.tsv"), &corpus.annotations)?;
    fs::write(dir.join("descriptions.tsv"), &corpus.descriptions)?;
    fs::write(dir.join("groups.tsv"), corpus.groups_tsv())?;
    for (label, text) in &corpus.embeddings {
        fs::write(dir.join(format!("emb_{label}.tsv")), text)?;
    }
    Ok(())
}

fn main() -> std::io::Result<()> {
    let root = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".to_string());
    let root = Path::new(&root);
    write(
        &root.join("synthetic"),
        &generate(&SyntheticSpec::standard()),
    )?;
    write(&root.join("fixture60"), &generate(&SyntheticSpec::small()))?;
    Ok(())
}
