//! Binary GO-term / acronym features and feature-block assembly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::AnnotationStore;
use crate::matrix::{DenseMatrix, DistanceMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("feature blocks disagree on row count: {expected} vs {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

const MAX_AFFIX: usize = 3;
const MIN_CORE: usize = 2;
const MAX_CORE: usize = 3;

fn is_affix(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit()
}

fn run_len(bytes: &[u8], from: usize, class: fn(u8) -> bool, cap: usize) -> usize {
    bytes[from..]
        .iter()
        .take(cap)
        .take_while(|&&b| class(b))
        .count()
}

/// End offset of the leftmost-preferred match of
/// `[a-z0-9]{0,3}[A-Z]{2,3}[a-z0-9]{0,3}` anchored at `start`.
///
/// Every quantifier is greedy. The trailing affix always succeeds, so the
/// backtracking search reduces to trying prefix lengths from longest to
/// shortest and taking the first one followed by at least two capitals.
fn match_at(bytes: &[u8], start: usize) -> Option<usize> {
    let prefix_max = run_len(bytes, start, is_affix, MAX_AFFIX);
    (0..=prefix_max).rev().find_map(|p| {
        let core_start = start + p;
        let core = run_len(bytes, core_start, |b| b.is_ascii_uppercase(), MAX_CORE);
        (core >= MIN_CORE).then(|| {
            let suffix_start = core_start + core;
            suffix_start + run_len(bytes, suffix_start, is_affix, MAX_AFFIX)
        })
    })
}

/// All non-overlapping acronym matches in `text`, left to right, repeats kept.
///
/// Four-letter capital runs are clipped to three letters (`NFKB1` yields
/// `NFK`), exactly as the pattern dictates.
pub fn extract_acronyms(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match match_at(bytes, i) {
            Some(end) => {
                // all matched bytes are ASCII, so the slice is on char boundaries
                out.push(text[i..end].to_string());
                i = end;
            }
            None => i += 1,
        }
    }
    out
}

/// Ordered unique tokens with their column positions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, pos: usize) -> &str {
        &self.tokens[pos]
    }
}

/// Unique tokens in first-occurrence order across the per-gene lists.
pub fn build_vocabulary<S: AsRef<str>>(token_lists: &[Vec<S>]) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    for token in token_lists.iter().flatten() {
        let token = token.as_ref();
        if !vocab.index.contains_key(token) {
            vocab.index.insert(token.to_string(), vocab.tokens.len());
            vocab.tokens.push(token.to_string());
        }
    }
    vocab
}

/// Genes × vocabulary presence matrix, one sorted index list per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinaryMatrix {
    n_cols: usize,
    rows: Vec<Vec<usize>>,
}

impl SparseBinaryMatrix {
    /// Builds from per-row column lists; indices are sorted and deduplicated.
    ///
    /// Panics if an index is out of range.
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            assert!(
                row.last().is_none_or(|&c| c < n_cols),
                "column out of range"
            );
        }
        Self { n_cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Set columns of row `i`, strictly increasing.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn popcount(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut values = vec![0.0; self.n_rows() * self.n_cols];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                values[i * self.n_cols + j] = 1.0;
            }
        }
        DenseMatrix::new(self.n_rows(), self.n_cols, values).expect("0/1 values")
    }

    /// Euclidean distances of the densified rows, computed from set overlaps:
    /// `|a - b|^2 = |a| + |b| - 2|a ∩ b|`.
    pub fn pairwise_distances(&self) -> DistanceMatrix {
        let n = self.n_rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let shared = sorted_intersection_len(&self.rows[i], &self.rows[j]);
                let sq = self.rows[i].len() + self.rows[j].len() - 2 * shared;
                let d = (sq as f64).sqrt();
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        DistanceMatrix::from_raw(n, values)
    }
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Row `g` has bit `v` set iff vocabulary token `v` is among gene `g`'s tokens.
/// Tokens outside the vocabulary are ignored.
pub fn encode_binary_matrix<S: AsRef<str>>(
    per_gene_tokens: &[Vec<S>],
    vocab: &Vocabulary,
) -> SparseBinaryMatrix {
    let rows = per_gene_tokens
        .iter()
        .map(|tokens| {
            tokens
                .iter()
                .filter_map(|t| vocab.position(t.as_ref()))
                .collect()
        })
        .collect();
    SparseBinaryMatrix::from_rows(vocab.len(), rows)
}

/// Which binary block is concatenated with the embedding block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureCombo {
    Acronyms,
    GoTerms,
    GoTermsAndAcronyms,
}

impl FeatureCombo {
    /// Table column order.
    pub const ALL: [FeatureCombo; 3] = [Self::Acronyms, Self::GoTerms, Self::GoTermsAndAcronyms];

    /// Machine-readable key used in CSV output and config files.
    pub fn key(self) -> &'static str {
        match self {
            Self::Acronyms => "acronyms",
            Self::GoTerms => "go_terms",
            Self::GoTermsAndAcronyms => "go_terms_and_acronyms",
        }
    }

    /// Human-readable column heading.
    pub fn title(self) -> &'static str {
        match self {
            Self::Acronyms => "Acronyms",
            Self::GoTerms => "GO-terms",
            Self::GoTermsAndAcronyms => "GO-terms with acronyms",
        }
    }

    pub fn uses_go(self) -> bool {
        matches!(self, Self::GoTerms | Self::GoTermsAndAcronyms)
    }

    pub fn uses_acronyms(self) -> bool {
        matches!(self, Self::Acronyms | Self::GoTermsAndAcronyms)
    }
}

impl fmt::Display for FeatureCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FeatureCombo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "acronyms" => Ok(Self::Acronyms),
            "go_terms" | "go" => Ok(Self::GoTerms),
            "go_terms_and_acronyms" | "go_terms_with_acronyms" | "go_acronyms" => {
                Ok(Self::GoTermsAndAcronyms)
            }
            _ => Err(format!("unknown feature combo `{s}`")),
        }
    }
}

/// Column-wise concatenation of the reduced blocks selected by `combo`.
/// The embedding block always comes first, then GO terms, then acronyms.
pub fn assemble_feature_blocks(
    combo: FeatureCombo,
    embedding: &DenseMatrix,
    go: &DenseMatrix,
    acronyms: &DenseMatrix,
) -> Result<DenseMatrix, EncodeError> {
    let mut blocks = vec![embedding];
    if combo.uses_go() {
        blocks.push(go);
    }
    if combo.uses_acronyms() {
        blocks.push(acronyms);
    }
    for b in &blocks {
        if b.n_rows() != embedding.n_rows() {
            return Err(EncodeError::ShapeMismatch {
                expected: embedding.n_rows(),
                got: b.n_rows(),
            });
        }
    }
    Ok(DenseMatrix::hconcat(&blocks).expect("row counts checked"))
}

/// Vocabularies and binary matrices for both token families of a corpus.
#[derive(Debug, Clone)]
pub struct BinaryFeatures {
    pub go_vocab: Vocabulary,
    pub go: SparseBinaryMatrix,
    pub acronym_vocab: Vocabulary,
    pub acronyms: SparseBinaryMatrix,
    /// Per-gene acronym lists as mined, repeats included.
    pub acronym_tokens: Vec<Vec<String>>,
}

pub fn encode_store(store: &AnnotationStore) -> BinaryFeatures {
    let go_terms = store.all_go_terms();
    let go_vocab = build_vocabulary(go_terms);
    let go = encode_binary_matrix(go_terms, &go_vocab);

    let acronym_tokens: Vec<Vec<String>> = store
        .descriptions()
        .par_iter()
        .map(|d| extract_acronyms(d))
        .collect();
    let acronym_vocab = build_vocabulary(&acronym_tokens);
    let acronyms = encode_binary_matrix(&acronym_tokens, &acronym_vocab);

    BinaryFeatures {
        go_vocab,
        go,
        acronym_vocab,
        acronyms,
        acronym_tokens,
    }
}
