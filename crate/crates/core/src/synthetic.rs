//! Deterministic synthetic corpora with planted gene groups, for tests,
//! demos and the bundled example data.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ingest::{
    parse_descriptions, parse_go_annotations, read_embeddings, write_embeddings, AnnotationStore,
    GeneSet,
};
use crate::matrix::DenseMatrix;
use crate::pipeline::{Corpus, Embeddings};
use crate::reduce::rng_from_seed;

/// Model labels in the order of the paper's score table.
pub const MODEL_LABELS: [&str; 6] = [
    "BaseBERT",
    "RoBERTa",
    "BioBERT",
    "ClinicBERT",
    "BlueBERT-PubMed",
    "BlueBERT-PubMed-MIMIC",
];

const GROUP_ACRONYMS: [[&str; 6]; 3] = [
    ["TLR4", "MYD88", "IRAK1", "NFKB1", "TRAF6", "IL1B"],
    ["MAPK3", "ERK2", "RAF1", "MEK1", "EGFR", "KRAS"],
    ["ATP5A", "NDUFS1", "COX4", "SDHB", "UQCRC", "CYCS"],
];
const SHARED_ACRONYMS: [&str; 3] = ["DNA", "RNA", "GTP"];
const FILLER: [&str; 12] = [
    "protein",
    "involved",
    "in",
    "the",
    "regulation",
    "of",
    "signaling",
    "binds",
    "complex",
    "activity",
    "pathway",
    "component",
];
const GROUP_TERMS: usize = 10;
const SHARED_TERMS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_genes: usize,
    /// Planted groups; at most 3.
    pub n_groups: usize,
    pub dims: usize,
    pub models: Vec<String>,
    /// Distance scale between group centroids in embedding space.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 200 genes, 3 groups, six 32-wide embedding files.
    pub fn standard() -> Self {
        Self {
            n_genes: 200,
            n_groups: 3,
            dims: 32,
            models: MODEL_LABELS.iter().map(|s| s.to_string()).collect(),
            separation: 2.5,
            seed: 20_240_101,
        }
    }

    /// 60 genes, 3 groups, one embedding file.
    pub fn small() -> Self {
        Self {
            n_genes: 60,
            models: vec![MODEL_LABELS[0].to_string()],
            seed: 60,
            ..Self::standard()
        }
    }
}

/// File contents of a generated corpus plus the planted group of each gene.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub gene_list: String,
    pub annotations: String,
    pub descriptions: String,
    /// `(model label, embedding TSV)` per model.
    pub embeddings: Vec<(String, String)>,
    pub groups: Vec<usize>,
    pub genes: GeneSet,
}

impl SyntheticCorpus {
    /// `gene\tgroup` lines.
    pub fn groups_tsv(&self) -> String {
        let mut out = String::from("gene\tgroup\n");
        for (g, grp) in self.genes.iter().zip(&self.groups) {
            let _ = writeln!(out, "{g}\t{grp}");
        }
        out
    }

    /// Parses the generated files into a corpus and its embedding blocks.
    pub fn load(&self) -> (Corpus, Vec<Embeddings>) {
        let go = parse_go_annotations(&self.annotations, &self.genes)
            .expect("generated annotations parse");
        let desc = parse_descriptions(&self.descriptions, &self.genes)
            .expect("generated descriptions parse");
        let store = AnnotationStore::new(self.genes.clone(), go, desc).expect("consistent store");
        let models = self
            .embeddings
            .iter()
            .map(|(label, text)| {
                Embeddings::new(
                    label.clone(),
                    read_embeddings(text, &self.genes).expect("generated embeddings parse"),
                )
            })
            .collect();
        (Corpus::new(store), models)
    }
}

fn go_id(n: usize) -> String {
    format!("GO:{n:07}")
}

fn aspect(n: usize) -> char {
    ['P', 'F', 'C'][n % 3]
}

/// Generates a corpus in which gene `i` belongs to group `i % n_groups`.
///
/// Group members share a pool of GO terms and acronyms and sit around a
/// common centroid in every embedding; each gene also carries a couple of
/// corpus-wide terms and tokens.
pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    assert!((1..=3).contains(&spec.n_groups), "1 to 3 planted groups");
    assert!(spec.n_genes >= spec.n_groups && spec.dims > 0);
    let mut rng = rng_from_seed(spec.seed);
    let ids: Vec<String> = (1..=spec.n_genes).map(|i| format!("SYN{i:04}")).collect();
    let groups: Vec<usize> = (0..spec.n_genes).map(|i| i % spec.n_groups).collect();
    let genes = GeneSet::from_ids(&ids).expect("generated ids are unique");

    let mut gene_list = String::from("# synthetic gene set\n");
    for id in &ids {
        let _ = writeln!(gene_list, "{id}");
    }

    let mut annotations = String::from("! synthetic GO annotations\n");
    let shared_base = 9_000;
    for (id, &g) in ids.iter().zip(&groups) {
        let base = 1_000 * (g + 1);
        let mut picked: Vec<usize> = (0..GROUP_TERMS)
            .filter(|_| rng.random_bool(0.6))
            .map(|t| base + t)
            .collect();
        while picked.len() < 2 {
            let t = base + rng.random_range(0..GROUP_TERMS);
            if !picked.contains(&t) {
                picked.push(t);
            }
        }
        for _ in 0..2 {
            picked.push(shared_base + rng.random_range(0..SHARED_TERMS));
        }
        for t in picked {
            let _ = writeln!(annotations, "{id}\t{}\t{}", go_id(t), aspect(t));
        }
    }

    let mut descriptions = String::new();
    for (id, &g) in ids.iter().zip(&groups) {
        let mut words: Vec<&str> = Vec::new();
        for _ in 0..rng.random_range(3..6) {
            words.push(FILLER.choose(&mut rng).expect("non-empty"));
        }
        for a in GROUP_ACRONYMS[g] {
            if rng.random_bool(0.5) {
                words.push(a);
            }
        }
        if words.len() < 5 {
            words.push(GROUP_ACRONYMS[g][rng.random_range(0..6)]);
        }
        words.push(SHARED_ACRONYMS.choose(&mut rng).expect("non-empty"));
        // deterministic shuffle so acronyms are spread through the text
        for i in (1..words.len()).rev() {
            let j = rng.random_range(0..=i);
            words.swap(i, j);
        }
        let _ = writeln!(descriptions, "{id}\t{}.", words.join(" "));
    }

    let mut embeddings = Vec::with_capacity(spec.models.len());
    for (m, label) in spec.models.iter().enumerate() {
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let centroids: Vec<Vec<f64>> = (0..spec.n_groups)
            .map(|_| (0..spec.dims).map(|_| spec.separation * normal()).collect())
            .collect();
        let noise = 0.8 + 0.15 * m as f64;
        let mut values = Vec::with_capacity(spec.n_genes * spec.dims);
        for &g in &groups {
            for d in 0..spec.dims {
                values.push(centroids[g][d] + noise * normal());
            }
        }
        let matrix = DenseMatrix::new(spec.n_genes, spec.dims, values).expect("finite values");
        let text = write_embeddings(&matrix, &genes).expect("rows match genes");
        embeddings.push((label.clone(), text));
    }

    SyntheticCorpus {
        gene_list,
        annotations,
        descriptions,
        embeddings,
        groups,
        genes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_gene_list;

    #[test]
    fn generated_files_parse() {
        let c = generate(&SyntheticSpec::small());
        let genes = parse_gene_list(&c.gene_list).unwrap();
        assert_eq!(genes, c.genes);
        let go = parse_go_annotations(&c.annotations, &genes).unwrap();
        assert_eq!(go.skipped_rows, 0);
        let d = parse_descriptions(&c.descriptions, &genes).unwrap();
        assert!(d.texts.iter().all(|t| !t.is_empty()));
        let e = read_embeddings(&c.embeddings[0].1, &genes).unwrap();
        assert_eq!((e.n_rows(), e.n_cols()), (60, 32));
        assert_eq!(c.groups.iter().filter(|&&g| g == 2).count(), 20);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            generate(&SyntheticSpec::small()),
            generate(&SyntheticSpec::small())
        );
    }
}
