//! Parsers for the plain-text corpus files: gene lists, GO annotation rows,
//! free-text descriptions and embedding tables.
//!
//! All line numbers reported in errors are 1-based physical lines. LF and
//! CRLF endings are both accepted on input.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("duplicate gene `{id}` at line {line}")]
    DuplicateGene { id: String, line: usize },
    #[error("no gene identifiers in input")]
    EmptyInput,
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: &'static str },
    #[error("gene `{0}` has no embedding row")]
    MissingGene(String),
    #[error("line {line}: expected {expected} values, got {got}")]
    RaggedRow {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, column {col}: value is not a finite number")]
    NonFiniteValue { line: usize, col: usize },
    #[error("bad embedding header: {0}")]
    BadHeader(&'static str),
    #[error("matrix has {rows} rows but the gene set has {genes} genes")]
    ShapeMismatch { rows: usize, genes: usize },
}

/// Iterates `(line_number, line)` with the line terminator removed.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

/// Ordered list of unique, non-empty gene identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GeneSet {
    genes: Vec<String>,
    index: HashMap<String, usize>,
}

impl GeneSet {
    pub fn from_ids<I, S>(ids: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = GeneSet::default();
        for (i, id) in ids.into_iter().enumerate() {
            set.push(id.into(), i + 1)?;
        }
        if set.is_empty() {
            return Err(IngestError::EmptyInput);
        }
        Ok(set)
    }

    fn push(&mut self, id: String, line: usize) -> Result<(), IngestError> {
        if id.is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty gene identifier",
            });
        }
        if self.index.contains_key(&id) {
            return Err(IngestError::DuplicateGene { id, line });
        }
        self.index.insert(id.clone(), self.genes.len());
        self.genes.push(id);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> &[String] {
        &self.genes
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.genes.iter().map(String::as_str)
    }
}

/// One gene identifier per line; `#` starts a comment line, blank lines are skipped.
pub fn parse_gene_list(text: &str) -> Result<GeneSet, IngestError> {
    let mut set = GeneSet::default();
    for (line_no, line) in numbered_lines(text) {
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        set.push(id.to_string(), line_no)?;
    }
    if set.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(set)
}

/// The three GO namespaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Aspect {
    CellularComponent,
    MolecularFunction,
    BiologicalProcess,
}

impl Aspect {
    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "C" => Some(Self::CellularComponent),
            "F" => Some(Self::MolecularFunction),
            "P" => Some(Self::BiologicalProcess),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Self::CellularComponent => 'C',
            Self::MolecularFunction => 'F',
            Self::BiologicalProcess => 'P',
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CellularComponent => "cellular_component",
            Self::MolecularFunction => "molecular_function",
            Self::BiologicalProcess => "biological_process",
        })
    }
}

/// `GO:` followed by exactly seven ASCII digits.
pub fn is_go_id(s: &str) -> bool {
    s.strip_prefix("GO:")
        .is_some_and(|d| d.len() == 7 && d.bytes().all(|b| b.is_ascii_digit()))
}

/// GO terms per gene (indexed by gene position), in file order without repeats.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GoAnnotations {
    pub terms: Vec<Vec<String>>,
    pub aspects: BTreeMap<String, Aspect>,
    /// Rows naming genes outside the gene set.
    pub skipped_rows: usize,
}

pub fn parse_go_annotations(text: &str, genes: &GeneSet) -> Result<GoAnnotations, IngestError> {
    let mut out = GoAnnotations {
        terms: vec![Vec::new(); genes.len()],
        ..Default::default()
    };
    for (line_no, line) in numbered_lines(text) {
        if line.starts_with('!') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let gene = fields.next().unwrap_or("").trim();
        let Some(go_id) = fields.next().map(str::trim) else {
            return Err(IngestError::MalformedRow {
                line: line_no,
                reason: "expected at least gene_id and go_id columns",
            });
        };
        if !is_go_id(go_id) {
            return Err(IngestError::MalformedRow {
                line: line_no,
                reason: "go_id must be GO: followed by 7 digits",
            });
        }
        let aspect = match fields.next().map(str::trim) {
            None | Some("") => None,
            Some(letter) => Some(
                Aspect::from_letter(letter).ok_or(IngestError::MalformedRow {
                    line: line_no,
                    reason: "aspect must be one of C, F, P",
                })?,
            ),
        };
        let Some(pos) = genes.position(gene) else {
            out.skipped_rows += 1;
            continue;
        };
        if let Some(aspect) = aspect {
            out.aspects.entry(go_id.to_string()).or_insert(aspect);
        }
        let row = &mut out.terms[pos];
        if !row.iter().any(|t| t == go_id) {
            row.push(go_id.to_string());
        }
    }
    Ok(out)
}

/// Free-text description per gene; genes absent from the file get `""`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Descriptions {
    pub texts: Vec<String>,
    pub skipped_rows: usize,
}

pub fn parse_descriptions(text: &str, genes: &GeneSet) -> Result<Descriptions, IngestError> {
    let mut out = Descriptions {
        texts: vec![String::new(); genes.len()],
        skipped_rows: 0,
    };
    for (line_no, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let Some((gene, desc)) = line.split_once('\t') else {
            return Err(IngestError::MalformedRow {
                line: line_no,
                reason: "expected gene_id<TAB>text",
            });
        };
        match genes.position(gene.trim()) {
            // a repeated gene keeps its last description
            Some(pos) => out.texts[pos] = desc.to_string(),
            None => out.skipped_rows += 1,
        }
    }
    Ok(out)
}

/// Joined annotations for one gene set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationStore {
    genes: GeneSet,
    go: GoAnnotations,
    descriptions: Descriptions,
}

impl AnnotationStore {
    pub fn new(
        genes: GeneSet,
        go: GoAnnotations,
        descriptions: Descriptions,
    ) -> Result<Self, IngestError> {
        for rows in [go.terms.len(), descriptions.texts.len()] {
            if rows != genes.len() {
                return Err(IngestError::ShapeMismatch {
                    rows,
                    genes: genes.len(),
                });
            }
        }
        Ok(Self {
            genes,
            go,
            descriptions,
        })
    }

    pub fn genes(&self) -> &GeneSet {
        &self.genes
    }

    /// GO terms of the gene at `pos`, in annotation-file order.
    pub fn go_terms(&self, pos: usize) -> &[String] {
        &self.go.terms[pos]
    }

    pub fn all_go_terms(&self) -> &[Vec<String>] {
        &self.go.terms
    }

    pub fn aspect(&self, go_id: &str) -> Option<Aspect> {
        self.go.aspects.get(go_id).copied()
    }

    pub fn description(&self, pos: usize) -> &str {
        &self.descriptions.texts[pos]
    }

    pub fn descriptions(&self) -> &[String] {
        &self.descriptions.texts
    }

    pub fn skipped_annotation_rows(&self) -> usize {
        self.go.skipped_rows
    }

    pub fn skipped_description_rows(&self) -> usize {
        self.descriptions.skipped_rows
    }
}

/// Reads an embedding table and returns its rows in `genes` order.
///
/// Rows for genes outside the set are ignored. Every gene in the set must
/// appear exactly once.
pub fn read_embeddings(text: &str, genes: &GeneSet) -> Result<DenseMatrix, IngestError> {
    let mut lines = numbered_lines(text).filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(IngestError::BadHeader("empty file"))?;
    let mut header_fields = header.split('\t');
    if header_fields.next() != Some("gene") {
        return Err(IngestError::BadHeader("first column must be `gene`"));
    }
    let dims = header_fields.count();

    let mut values = vec![0.0; genes.len() * dims];
    let mut seen = vec![false; genes.len()];
    for (line_no, line) in lines {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("");
        let pos = genes.position(id);
        let mut got = 0;
        for (col, field) in fields.enumerate() {
            got += 1;
            if col >= dims {
                continue;
            }
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| IngestError::NonFiniteValue {
                    line: line_no,
                    col: col + 1,
                })?;
            if !v.is_finite() {
                return Err(IngestError::NonFiniteValue {
                    line: line_no,
                    col: col + 1,
                });
            }
            if let Some(pos) = pos {
                values[pos * dims + col] = v;
            }
        }
        if got != dims {
            return Err(IngestError::RaggedRow {
                line: line_no,
                expected: dims,
                got,
            });
        }
        if let Some(pos) = pos {
            if std::mem::replace(&mut seen[pos], true) {
                return Err(IngestError::DuplicateGene {
                    id: id.to_string(),
                    line: line_no,
                });
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(IngestError::MissingGene(genes.ids()[missing].clone()));
    }
    Ok(DenseMatrix::new(genes.len(), dims, values).expect("values checked finite"))
}

/// Shortest decimal text that parses back to the same `f64` bits.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Serializes `matrix` in the embedding table format, LF line endings.
pub fn write_embeddings(matrix: &DenseMatrix, genes: &GeneSet) -> Result<String, IngestError> {
    if matrix.n_rows() != genes.len() {
        return Err(IngestError::ShapeMismatch {
            rows: matrix.n_rows(),
            genes: genes.len(),
        });
    }
    let mut out = String::from("gene");
    for d in 0..matrix.n_cols() {
        let _ = write!(out, "\td{d}");
    }
    out.push('\n');
    for (id, row) in genes.iter().zip(matrix.rows()) {
        out.push_str(id);
        for &v in row {
            out.push('\t');
            out.push_str(&format_f64(v));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genes(ids: &[&str]) -> GeneSet {
        GeneSet::from_ids(ids.iter().copied()).unwrap()
    }

    #[test]
    fn gene_list_basic() {
        let g = parse_gene_list("MYD88\nNFKB1\n").unwrap();
        assert_eq!(g.ids(), ["MYD88", "NFKB1"]);
    }

    #[test]
    fn gene_list_skips_comments_and_blanks() {
        let g = parse_gene_list("# header\n\nTP53\n").unwrap();
        assert_eq!(g.ids(), ["TP53"]);
        let g = parse_gene_list("  A \r\nB\r\n").unwrap();
        assert_eq!(g.ids(), ["A", "B"]);
    }

    #[test]
    fn gene_list_errors() {
        assert_eq!(
            parse_gene_list("A\nA\n").unwrap_err(),
            IngestError::DuplicateGene {
                id: "A".into(),
                line: 2
            }
        );
        assert_eq!(
            parse_gene_list("# only\n\n").unwrap_err(),
            IngestError::EmptyInput
        );
    }

    #[test]
    fn go_single_row() {
        let g = genes(&["TP53"]);
        let a = parse_go_annotations("TP53\tGO:0005634\tC\n", &g).unwrap();
        assert_eq!(a.terms, vec![vec!["GO:0005634".to_string()]]);
        assert_eq!(a.aspects["GO:0005634"], Aspect::CellularComponent);
        assert_eq!(a.aspects["GO:0005634"].to_string(), "cellular_component");
        assert_eq!(a.skipped_rows, 0);
    }

    #[test]
    fn go_unknown_gene_is_counted() {
        let g = genes(&["BRCA1"]);
        let a = parse_go_annotations("TP53\tGO:0005634\tC\n", &g).unwrap();
        assert!(a.terms[0].is_empty());
        assert!(a.aspects.is_empty());
        assert_eq!(a.skipped_rows, 1);
    }

    #[test]
    fn go_malformed_rows() {
        let g = genes(&["TP53"]);
        assert!(matches!(
            parse_go_annotations("TP53\tBAD\n", &g),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_go_annotations("! comment\nTP53\n", &g),
            Err(IngestError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            parse_go_annotations("TP53\tGO:0005634\tX\n", &g),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            parse_go_annotations("TP53\tGO:00056341\n", &g),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn go_duplicates_collapse() {
        let g = genes(&["A"]);
        let a = parse_go_annotations("!gaf\nA\tGO:0000001\nA\tGO:0000001\tP\nA\tGO:0000002\n", &g)
            .unwrap();
        assert_eq!(a.terms[0], ["GO:0000001", "GO:0000002"]);
        assert_eq!(a.aspects["GO:0000001"], Aspect::BiologicalProcess);
    }

    #[test]
    fn descriptions_basic_and_default() {
        let g = genes(&["MYD88", "TP53"]);
        let d = parse_descriptions("MYD88\tAdapter protein involved in...\n", &g).unwrap();
        assert_eq!(d.texts[0], "Adapter protein involved in...");
        assert_eq!(d.texts[1], "");
        assert!(matches!(
            parse_descriptions("MYD88 no tab", &g),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn embeddings_basic() {
        let g = genes(&["A"]);
        let m = read_embeddings("gene\td0\td1\nA\t0.5\t-1.25\n", &g).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (1, 2));
        assert_eq!(m.values(), [0.5, -1.25]);
    }

    #[test]
    fn embeddings_reordered_to_gene_order() {
        let g = genes(&["A", "B"]);
        let m = read_embeddings("gene\td0\nB\t2\nA\t1\n", &g).unwrap();
        assert_eq!(m.values(), [1.0, 2.0]);
    }

    #[test]
    fn embeddings_errors() {
        let g = genes(&["A"]);
        assert_eq!(
            read_embeddings("gene\td0\td1\nA\t0.5\n", &g).unwrap_err(),
            IngestError::RaggedRow {
                line: 2,
                expected: 2,
                got: 1
            }
        );
        assert_eq!(
            read_embeddings("gene\td0\nB\t1\n", &g).unwrap_err(),
            IngestError::MissingGene("A".into())
        );
        assert_eq!(
            read_embeddings("gene\td0\nA\tNaN\n", &g).unwrap_err(),
            IngestError::NonFiniteValue { line: 2, col: 1 }
        );
        assert_eq!(
            read_embeddings("gene\td0\nA\tabc\n", &g).unwrap_err(),
            IngestError::NonFiniteValue { line: 2, col: 1 }
        );
        assert!(matches!(
            read_embeddings("gene\td0\nA\t1\nA\t2\n", &g),
            Err(IngestError::DuplicateGene { line: 3, .. })
        ));
        assert!(matches!(
            read_embeddings("", &g),
            Err(IngestError::BadHeader(_))
        ));
    }

    #[test]
    fn write_round_trip_examples() {
        let g = genes(&["A"]);
        let m = DenseMatrix::new(1, 2, vec![0.5, -1.25]).unwrap();
        let text = write_embeddings(&m, &g).unwrap();
        assert_eq!(text, "gene\td0\td1\nA\t0.5\t-1.25\n");
        assert_eq!(read_embeddings(&text, &g).unwrap(), m);
    }

    #[test]
    fn write_zero_columns() {
        let g = genes(&["A", "B"]);
        let m = DenseMatrix::zeros(2, 0);
        let text = write_embeddings(&m, &g).unwrap();
        assert!(text.starts_with("gene\n"));
        let back = read_embeddings(&text, &g).unwrap();
        assert_eq!((back.n_rows(), back.n_cols()), (2, 0));
    }

    #[test]
    fn write_shape_mismatch() {
        let g = genes(&["A"]);
        let m = DenseMatrix::zeros(2, 1);
        assert_eq!(
            write_embeddings(&m, &g).unwrap_err(),
            IngestError::ShapeMismatch { rows: 2, genes: 1 }
        );
    }

    #[test]
    fn extreme_values_round_trip() {
        for v in [
            f64::MIN_POSITIVE,
            f64::MAX,
            -0.0,
            1e-300,
            123456789.123456789,
            5e-324,
        ] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
