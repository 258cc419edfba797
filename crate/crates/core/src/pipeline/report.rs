//! Text, CSV and SVG renderings of pipeline results.

use std::fmt::Write as _;

use super::{PipelineError, SweepCell, SweepResult};
use crate::cluster::{ClusterLabels, NOISE};
use crate::encode::{BinaryFeatures, SparseBinaryMatrix, Vocabulary};
use crate::matrix::DenseMatrix;

const CSV_HEADER: &str = "model,reducer,combo,clusterer,silhouette,n_clusters,n_noise,seconds";
const ERROR_MARK: &str = "ERR";
const BEST_MARK: char = '*';

/// Three decimals; negative zero prints as `0.000`.
pub fn format_score(score: f64) -> String {
    let s = format!("{score:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv(result: &SweepResult, timed: bool) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        let (score, n_clusters, n_noise) = match &c.outcome {
            Ok(s) => (
                format_score(s.silhouette),
                s.n_clusters.to_string(),
                s.n_noise.to_string(),
            ),
            Err(_) => (ERROR_MARK.to_string(), String::new(), String::new()),
        };
        let seconds = if timed {
            format!("{:.3}", c.seconds)
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{score},{n_clusters},{n_noise},{seconds}",
            csv_field(&c.model),
            c.reducer.key(),
            c.combo.key(),
            c.clusterer.key(),
        );
    }
    out
}

fn pad(s: &str, width: usize, right: bool) -> String {
    let len = s.chars().count();
    let fill = " ".repeat(width.saturating_sub(len));
    if right {
        format!("{fill}{s}")
    } else {
        format!("{s}{fill}")
    }
}

fn center(s: &str, width: usize) -> String {
    let len = s.chars().count();
    let total = width.saturating_sub(len);
    let left = total / 2;
    format!("{}{s}{}", " ".repeat(left), " ".repeat(total - left))
}

/// Pivoted table in the layout of the paper's score table: one row per
/// model × clusterer, column groups per combo, each split by reducer. The
/// best score of every column carries a trailing `*`.
fn pivot(result: &SweepResult) -> String {
    let columns: Vec<_> = result
        .combos
        .iter()
        .flat_map(|&combo| result.reducers.iter().map(move |&r| (combo, r)))
        .collect();
    let best: Vec<Option<f64>> = columns
        .iter()
        .map(|&(combo, r)| result.best_in_column(r, combo).and_then(SweepCell::score))
        .collect();

    let cell_text = |model: &str, k, col: usize| -> String {
        let (combo, r) = columns[col];
        match result.cell(model, r, combo, k) {
            None => "-".to_string(),
            Some(c) => match c.score() {
                None => ERROR_MARK.to_string(),
                Some(s) if Some(s) == best[col] => format!("{}{BEST_MARK}", format_score(s)),
                Some(s) => format_score(s),
            },
        }
    };

    let mut body: Vec<(String, String, Vec<String>)> = Vec::new();
    for model in &result.models {
        for (i, &k) in result.clusterers.iter().enumerate() {
            let name = if i == 0 { model.clone() } else { String::new() };
            let vals = (0..columns.len())
                .map(|col| cell_text(model, k, col))
                .collect();
            body.push((name, k.title().to_string(), vals));
        }
    }

    let model_head = "Model";
    let method_head = "Clustering method";
    let w_model = body
        .iter()
        .map(|r| r.0.chars().count())
        .chain([model_head.len()])
        .max()
        .unwrap_or(0);
    let w_method = body
        .iter()
        .map(|r| r.1.chars().count())
        .chain([method_head.len()])
        .max()
        .unwrap_or(0);
    // values are right-aligned; unmarked values get a trailing space so the
    // decimal points line up with marked ones
    let shown = |v: &str| {
        if v.ends_with(BEST_MARK) {
            v.to_string()
        } else {
            format!("{v} ")
        }
    };
    let mut widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(col, (_, r))| {
            body.iter()
                .map(|row| shown(&row.2[col]).chars().count())
                .chain([r.title().chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let n_red = result.reducers.len();
    for (g, combo) in result.combos.iter().enumerate() {
        let span: usize =
            widths[g * n_red..(g + 1) * n_red].iter().sum::<usize>() + 3 * (n_red - 1);
        let need = combo.title().chars().count();
        if need > span {
            let extra = need - span;
            for (i, w) in widths[g * n_red..(g + 1) * n_red].iter_mut().enumerate() {
                *w += extra / n_red + usize::from(i < extra % n_red);
            }
        }
    }

    let mut out = String::new();
    let mut line = format!(
        "| {} | {} |",
        pad("", w_model, false),
        pad("", w_method, false)
    );
    for (g, combo) in result.combos.iter().enumerate() {
        let span: usize =
            widths[g * n_red..(g + 1) * n_red].iter().sum::<usize>() + 3 * (n_red - 1);
        let _ = write!(line, " {} |", center(combo.title(), span));
    }
    out.push_str(&line);
    out.push('\n');

    let mut line = format!(
        "| {} | {} |",
        pad(model_head, w_model, false),
        pad(method_head, w_method, false)
    );
    for (col, (_, r)) in columns.iter().enumerate() {
        let _ = write!(line, " {} |", center(r.title(), widths[col]));
    }
    out.push_str(&line);
    out.push('\n');

    let rule = |out: &mut String| {
        let mut line = format!("|{}|{}|", "-".repeat(w_model + 2), "-".repeat(w_method + 2));
        for w in &widths {
            let _ = write!(line, "{}|", "-".repeat(w + 2));
        }
        out.push_str(&line);
        out.push('\n');
    };
    rule(&mut out);
    for (i, (name, method, vals)) in body.iter().enumerate() {
        if i > 0 && !name.is_empty() {
            rule(&mut out);
        }
        let mut line = format!(
            "| {} | {} |",
            pad(name, w_model, false),
            pad(method, w_method, false)
        );
        for (col, v) in vals.iter().enumerate() {
            let _ = write!(line, " {} |", pad(&shown(v), widths[col], true));
        }
        out.push_str(&line);
        out.push('\n');
    }
    let _ = writeln!(out, "\n{BEST_MARK} best silhouette score in the column");
    out
}

/// Long-form CSV (without timings, so reruns are byte-identical) and the
/// pivoted table.
pub fn emit_sweep_table(result: &SweepResult) -> (String, String) {
    (csv(result, false), pivot(result))
}

/// Like [`emit_sweep_table`] with the `seconds` column filled in.
pub fn emit_sweep_table_timed(result: &SweepResult) -> (String, String) {
    (csv(result, true), pivot(result))
}

/// Cluster colors, cycled when there are more clusters than entries.
pub const SVG_PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#393b79",
];
const NOISE_COLOR: &str = "#9e9e9e";

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Standalone SVG scatter plot of 2-D coordinates.
///
/// The viewBox spans the data bounds plus a 5% margin (y flipped so that up
/// is positive). Clusters are colored from [`SVG_PALETTE`] and numbered from
/// 1 at their centroids; noise is gray and unnumbered.
pub fn emit_scatter_svg(
    coords: &DenseMatrix,
    labels: &ClusterLabels,
    genes: &[String],
) -> Result<String, PipelineError> {
    if coords.n_cols() != 2 {
        return Err(PipelineError::BadShape(coords.n_cols()));
    }
    let n = coords.n_rows();
    for other in [labels.len(), genes.len()] {
        if other != n {
            return Err(PipelineError::LengthMismatch { rows: n, other });
        }
    }

    let (mut x0, mut x1, mut y0, mut y1) = (0.0, 0.0, 0.0, 0.0);
    for (i, p) in coords.rows().enumerate() {
        if i == 0 {
            (x0, x1, y0, y1) = (p[0], p[0], p[1], p[1]);
        }
        x0 = f64::min(x0, p[0]);
        x1 = f64::max(x1, p[0]);
        y0 = f64::min(y0, p[1]);
        y1 = f64::max(y1, p[1]);
    }
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let span_y = if y1 > y0 { y1 - y0 } else { 1.0 };
    let (mx, my) = (0.05 * span_x, 0.05 * span_y);
    let (vx, vy, vw, vh) = (x0 - mx, -(y1 + my), span_x + 2.0 * mx, span_y + 2.0 * my);
    let scale = vw.max(vh);
    let r = 0.006 * scale;
    let font = 0.03 * scale;
    let stroke = 0.002 * scale;

    let color = |l: i32| {
        if l == NOISE {
            NOISE_COLOR
        } else {
            SVG_PALETTE[l as usize % SVG_PALETTE.len()]
        }
    };

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{} {} {} {}\" width=\"800\" height=\"{}\">",
        num(vx),
        num(vy),
        num(vw),
        num(vh),
        num((800.0 * vh / vw).round()),
    );
    let _ = writeln!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\"/>",
        num(vx),
        num(vy),
        num(vw),
        num(vh)
    );

    // axes along the lower and left data bounds, ticks at the extremes
    let _ = writeln!(
        out,
        "<g class=\"axes\" stroke=\"#444444\" stroke-width=\"{}\" fill=\"none\">",
        num(stroke)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
        num(x0),
        num(-y0),
        num(x1),
        num(-y0)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
        num(x0),
        num(-y0),
        num(x0),
        num(-y1)
    );
    out.push_str("</g>\n");
    let small = 0.6 * font;
    let _ = writeln!(
        out,
        "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"{}\" fill=\"#444444\">",
        num(small)
    );
    for (x, y, anchor, text) in [
        (x0, -y0 + small, "start", x0),
        (x1, -y0 + small, "end", x1),
        (x0 - 0.2 * small, -y0, "end", y0),
        (x0 - 0.2 * small, -y1 + small, "end", y1),
    ] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            num(x),
            num(y),
            num(text)
        );
    }
    out.push_str("</g>\n");

    out.push_str("<g class=\"points\">\n");
    for (i, p) in coords.rows().enumerate() {
        let l = labels.labels()[i];
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"><title>{}</title></circle>",
            num(p[0]),
            num(-p[1]),
            num(r),
            color(l),
            xml_escape(&genes[i])
        );
    }
    out.push_str("</g>\n");

    let members = labels.members();
    let _ = writeln!(
        out,
        "<g class=\"centroids\" font-family=\"sans-serif\" font-size=\"{}\" font-weight=\"bold\" text-anchor=\"middle\" fill=\"black\">",
        num(font)
    );
    for (c, m) in members.iter().enumerate() {
        let cx = m.iter().map(|&i| coords.get(i, 0)).sum::<f64>() / m.len() as f64;
        let cy = m.iter().map(|&i| coords.get(i, 1)).sum::<f64>() / m.len() as f64;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            num(cx),
            num(-cy + 0.35 * font),
            c + 1
        );
    }
    out.push_str("</g>\n");

    // legend in the top-left corner
    let line_h = 1.3 * small;
    let entries = members.len() + usize::from(labels.n_noise() > 0);
    let (lx, ly) = (vx + 0.5 * small, vy + 0.5 * small);
    let _ = writeln!(
        out,
        "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"{}\">",
        num(small)
    );
    let _ = writeln!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\" fill-opacity=\"0.8\" stroke=\"#999999\" stroke-width=\"{}\"/>",
        num(lx),
        num(ly),
        num(9.0 * small),
        num(line_h * entries as f64 + 0.5 * small),
        num(stroke)
    );
    let mut row = 0;
    let mut entry = |out: &mut String, fill: &str, text: String| {
        let y = ly + line_h * (row as f64 + 0.5) + 0.25 * small;
        let _ = writeln!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            num(lx + 0.8 * small),
            num(y),
            num(0.35 * small),
            num(lx + 1.6 * small),
            num(y + 0.35 * small),
            text
        );
        row += 1;
    };
    for (c, m) in members.iter().enumerate() {
        entry(
            &mut out,
            color(c as i32),
            format!("cluster {} (n={})", c + 1, m.len()),
        );
    }
    if labels.n_noise() > 0 {
        entry(
            &mut out,
            NOISE_COLOR,
            format!("noise (n={})", labels.n_noise()),
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

/// Number of terms listed per token family and cluster.
pub const ENRICHMENT_TOP: usize = 10;
const ENRICHMENT_EPS: f64 = 1e-9;

struct Ranked<'a> {
    token: &'a str,
    ratio: f64,
    in_cluster: usize,
    corpus: usize,
}

fn rank<'a>(
    members: &[usize],
    matrix: &SparseBinaryMatrix,
    vocab: &'a Vocabulary,
    n: usize,
) -> Vec<Ranked<'a>> {
    let mut corpus = vec![0usize; vocab.len()];
    for i in 0..matrix.n_rows() {
        for &j in matrix.row(i) {
            corpus[j] += 1;
        }
    }
    let mut inside = vec![0usize; vocab.len()];
    for &i in members {
        for &j in matrix.row(i) {
            inside[j] += 1;
        }
    }
    let mut ranked: Vec<Ranked<'a>> = (0..vocab.len())
        .filter(|&j| inside[j] > 0)
        .map(|j| {
            let f_in = inside[j] as f64 / members.len() as f64;
            let f_all = corpus[j] as f64 / n as f64;
            Ranked {
                token: vocab.token(j),
                ratio: f_in / (f_all + ENRICHMENT_EPS),
                in_cluster: inside[j],
                corpus: corpus[j],
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then_with(|| a.token.cmp(b.token))
    });
    ranked.truncate(ENRICHMENT_TOP);
    ranked
}

/// Per cluster: its size and the GO terms and acronyms most over-represented
/// relative to the whole gene set, ranked by
/// `(in-cluster frequency) / (corpus frequency + 1e-9)`, then by token.
/// Frequencies are fractions of genes carrying the token.
pub fn cluster_enrichment_report(labels: &ClusterLabels, features: &BinaryFeatures) -> String {
    let n = labels.len();
    let mut out = String::new();
    for (c, members) in labels.members().iter().enumerate() {
        let _ = writeln!(out, "cluster {} ({} genes)", c + 1, members.len());
        for (title, matrix, vocab) in [
            ("GO terms", &features.go, &features.go_vocab),
            ("acronyms", &features.acronyms, &features.acronym_vocab),
        ] {
            let _ = writeln!(out, "  {title}:");
            let ranked = rank(members, matrix, vocab, n);
            if ranked.is_empty() {
                out.push_str("    (none)\n");
            }
            for r in ranked {
                let _ = writeln!(
                    out,
                    "    {}\tratio={:.3}\tin_cluster={}/{}\tcorpus={}/{}",
                    r.token,
                    r.ratio,
                    r.in_cluster,
                    members.len(),
                    r.corpus,
                    n
                );
            }
        }
        out.push('\n');
    }
    if labels.n_noise() > 0 {
        let _ = writeln!(out, "noise ({} genes)", labels.n_noise());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{CellScore, SweepCell};
    use super::*;
    use crate::cluster::ClusterMethod;
    use crate::encode::FeatureCombo;
    use crate::reduce::ReducerMethod;

    #[test]
    fn score_format() {
        assert_eq!(format_score(0.546), "0.546");
        assert_eq!(format_score(-0.441), "-0.441");
        assert_eq!(format_score(-0.0001), "0.000");
        assert_eq!(format_score(0.9996), "1.000");
    }

    fn one_cell(outcome: Result<CellScore, PipelineError>) -> SweepResult {
        SweepResult {
            models: vec!["m,1".into()],
            reducers: vec![ReducerMethod::Umap],
            combos: vec![FeatureCombo::Acronyms],
            clusterers: vec![ClusterMethod::KMeans],
            cells: vec![SweepCell {
                model: "m,1".into(),
                reducer: ReducerMethod::Umap,
                combo: FeatureCombo::Acronyms,
                clusterer: ClusterMethod::KMeans,
                outcome,
                seconds: 1.25,
            }],
        }
    }

    #[test]
    fn csv_rows_and_quoting() {
        let r = one_cell(Ok(CellScore {
            silhouette: 0.5,
            n_clusters: 3,
            n_noise: 0,
        }));
        let (csv, _) = emit_sweep_table(&r);
        assert_eq!(
            csv,
            format!("{CSV_HEADER}\n\"m,1\",umap,acronyms,kmeans,0.500,3,0,\n")
        );
        let (csv, _) = emit_sweep_table_timed(&r);
        assert!(csv.ends_with(",0.500,3,0,1.250\n"));
    }

    #[test]
    fn error_cells_are_marked() {
        let r = one_cell(Err(PipelineError::NoModels));
        let (csv, table) = emit_sweep_table(&r);
        assert!(csv.ends_with(",ERR,,,\n"));
        assert!(table.contains("ERR"));
    }

    #[test]
    fn empty_result_is_header_only() {
        let r = SweepResult {
            models: vec![],
            reducers: vec![],
            combos: vec![],
            clusterers: vec![],
            cells: vec![],
        };
        assert_eq!(emit_sweep_table(&r).0, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn svg_structure() {
        let coords =
            DenseMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [6.0, 5.0], [3.0, 9.0]])
                .unwrap();
        let labels = ClusterLabels::from_raw([0, 0, 1, 1, -1]);
        let names: Vec<String> = ["A", "B&", "C", "D", "E"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let svg = emit_scatter_svg(&coords, &labels, &names).unwrap();
        assert_eq!(svg.matches("<circle cx").count(), 5 + 3);
        assert!(svg.contains(">1</text>") && svg.contains(">2</text>"));
        assert!(!svg.contains(">3</text>"));
        assert!(svg.contains(NOISE_COLOR));
        assert!(svg.contains("B&amp;"));
        // x in [-0.3, 6.3], y flipped in [-9.45, 0.45]
        assert!(svg.contains("viewBox=\"-0.3 -9.45 6.6 9.9\""), "{svg}");
        let flat = DenseMatrix::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(
            emit_scatter_svg(&flat, &ClusterLabels::from_raw([0]), &names[..1]).unwrap_err(),
            PipelineError::BadShape(3)
        );
    }
}
