//! Result grids: one row per (clinical dimension, quality dimension, method),
//! one three-metric column group per encoder.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::registry;
use crate::error::{Error, Result};
use crate::metrics::MetricTriple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Idt,
    Ft,
    Jt,
}

impl Method {
    pub fn from_paradigm(paradigm: &str) -> Result<Method> {
        match paradigm {
            "idt" => Ok(Method::Idt),
            "ft" | "ft_stage1" => Ok(Method::Ft),
            "jt" => Ok(Method::Jt),
            other => Err(Error::InvalidParadigm(format!(
                "unknown paradigm `{other}` in checkpoint provenance"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Idt => write!(f, "IDT"),
            Method::Ft => write!(f, "FT"),
            Method::Jt => write!(f, "JT"),
        }
    }
}

/// One evaluated (encoder, paradigm, dimension) cell plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sap_dimension: String,
    pub quali_dimension: Option<String>,
    pub method: Method,
    pub encoder_id: String,
    pub metrics: MetricTriple,
    pub run_id: String,
    pub config_digest: String,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("not a run report: {e}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    /// Aligned plain text; the best defined value per column group within a
    /// clinical-dimension block carries a trailing `*`.
    Text,
    /// Tab-separated values, cells unmarked.
    Tsv,
}

pub const MISSING_CELL: &str = "\u{2014}"; // em dash
pub const UNDEFINED_CELL: &str = "n/a";

fn fmt_metric(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_corr(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED_CELL.to_string(), fmt_metric)
}

/// Row key within a block: IDT (no quality dimension) sorts first, then
/// quality dimensions alphabetically with FT before JT.
type RowKey = (String, Option<String>, Method);

fn cell_key(r: &RunReport) -> (RowKey, String) {
    (
        (
            r.sap_dimension.clone(),
            r.quali_dimension.clone(),
            r.method,
        ),
        r.encoder_id.clone(),
    )
}

struct Grid {
    encoders: Vec<String>,
    rows: Vec<RowKey>,
    /// rows x encoders
    cells: Vec<Vec<Option<MetricTriple>>>,
}

fn metrics_equal(a: &MetricTriple, b: &MetricTriple) -> bool {
    a.mse == b.mse && a.lcc == b.lcc && a.srcc == b.srcc && a.n == b.n
}

fn build_grid(reports: &[RunReport]) -> Result<Grid> {
    // Duplicate cells with identical metrics collapse; different metrics for
    // one cell is a conflict.
    let mut by_cell: std::collections::BTreeMap<(RowKey, String), (MetricTriple, Vec<String>)> =
        std::collections::BTreeMap::new();
    for r in reports {
        let key = cell_key(r);
        match by_cell.get_mut(&key) {
            None => {
                by_cell.insert(key, (r.metrics, vec![r.run_id.clone()]));
            }
            Some((existing, run_ids)) => {
                run_ids.push(r.run_id.clone());
                if !metrics_equal(existing, &r.metrics) {
                    return Err(Error::ConflictingReports {
                        cell: format!(
                            "({}, {}, {}, {})",
                            key.0 .0,
                            key.0 .1.as_deref().unwrap_or(MISSING_CELL),
                            key.0 .2,
                            key.1
                        ),
                        run_ids: run_ids.clone(),
                    });
                }
            }
        }
    }

    // Encoder columns: bundled registry order first, unknown ids after,
    // alphabetically.
    let present: BTreeSet<&String> = by_cell.keys().map(|(_, e)| e).collect();
    let mut encoders: Vec<String> = registry()
        .iter()
        .map(|s| s.encoder_id.clone())
        .filter(|id| present.contains(id))
        .collect();
    let mut extra: Vec<String> = present
        .iter()
        .filter(|id| !encoders.contains(**id))
        .map(|id| (*id).clone())
        .collect();
    extra.sort();
    encoders.extend(extra);

    let rows: Vec<RowKey> = by_cell
        .keys()
        .map(|(row, _)| row.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let cells = rows
        .iter()
        .map(|row| {
            encoders
                .iter()
                .map(|enc| {
                    by_cell
                        .get(&(row.clone(), enc.clone()))
                        .map(|(m, _)| *m)
                })
                .collect()
        })
        .collect();

    Ok(Grid {
        encoders,
        rows,
        cells,
    })
}

/// Within each clinical-dimension block, the best defined value per
/// (encoder, metric) column: lowest MSE, highest LCC and SRCC. Only groups
/// with at least two defined values get marks.
#[allow(clippy::needless_range_loop)]
fn best_cells(grid: &Grid) -> Vec<Vec<[bool; 3]>> {
    let mut best = vec![vec![[false; 3]; grid.encoders.len()]; grid.rows.len()];
    let blocks: BTreeSet<&String> = grid.rows.iter().map(|(sap, _, _)| sap).collect();
    for block in blocks {
        let row_idx: Vec<usize> = grid
            .rows
            .iter()
            .enumerate()
            .filter(|(_, (sap, _, _))| sap == block)
            .map(|(i, _)| i)
            .collect();
        for col in 0..grid.encoders.len() {
            for metric in 0..3 {
                let values: Vec<(usize, f64)> = row_idx
                    .iter()
                    .filter_map(|&i| {
                        grid.cells[i][col].and_then(|m| match metric {
                            0 => Some((i, m.mse)),
                            1 => m.lcc.map(|v| (i, v)),
                            _ => m.srcc.map(|v| (i, v)),
                        })
                    })
                    .collect();
                if values.len() < 2 {
                    continue;
                }
                let target = if metric == 0 {
                    values.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min)
                } else {
                    values
                        .iter()
                        .map(|(_, v)| *v)
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                for (i, v) in values {
                    if v == target {
                        best[i][col][metric] = true;
                    }
                }
            }
        }
    }
    best
}

fn display_name(encoder_id: &str) -> String {
    registry()
        .iter()
        .find(|s| s.encoder_id == encoder_id)
        .map(|s| s.display_name.clone())
        .unwrap_or_else(|| encoder_id.to_string())
}

/// Render run reports as a grid.
pub fn render_grid(reports: &[RunReport], format: GridFormat) -> Result<String> {
    let grid = build_grid(reports)?;
    match format {
        GridFormat::Tsv => render_tsv(&grid),
        GridFormat::Text => render_text(&grid),
    }
}

fn triple_cells(m: Option<&MetricTriple>) -> [String; 3] {
    match m {
        None => [
            MISSING_CELL.to_string(),
            MISSING_CELL.to_string(),
            MISSING_CELL.to_string(),
        ],
        Some(t) => [fmt_metric(t.mse), fmt_corr(t.lcc), fmt_corr(t.srcc)],
    }
}

fn render_tsv(grid: &Grid) -> Result<String> {
    let mut out = String::new();
    out.push_str("sap_dimension\tquali_dimension\tmethod");
    for enc in &grid.encoders {
        out.push_str(&format!("\t{enc}:mse\t{enc}:lcc\t{enc}:srcc"));
    }
    out.push('\n');
    for (row, cells) in grid.rows.iter().zip(&grid.cells) {
        let (sap, quali, method) = row;
        out.push_str(&format!(
            "{sap}\t{}\t{method}",
            quali.as_deref().unwrap_or(MISSING_CELL)
        ));
        for cell in cells {
            for c in triple_cells(cell.as_ref()) {
                out.push('\t');
                out.push_str(&c);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn render_text(grid: &Grid) -> Result<String> {
    let best = best_cells(grid);

    let mut label_rows: Vec<[String; 3]> = Vec::new();
    let mut prev_sap: Option<&str> = None;
    for (sap, quali, method) in &grid.rows {
        let sap_label = if prev_sap == Some(sap.as_str()) {
            String::new()
        } else {
            sap.clone()
        };
        prev_sap = Some(sap.as_str());
        label_rows.push([
            sap_label,
            quali.clone().unwrap_or_else(|| MISSING_CELL.to_string()),
            method.to_string(),
        ]);
    }

    let mut value_rows: Vec<Vec<String>> = Vec::new();
    for (i, cells) in grid.cells.iter().enumerate() {
        let mut row = Vec::new();
        for (col, cell) in cells.iter().enumerate() {
            for (metric, text) in triple_cells(cell.as_ref()).into_iter().enumerate() {
                let marked = if best[i][col][metric] {
                    format!("{text}*")
                } else {
                    text
                };
                row.push(marked);
            }
        }
        value_rows.push(row);
    }

    let label_headers = ["SAP", "QualiSpeech", "Method"];
    let mut label_widths = [0usize; 3];
    for k in 0..3 {
        label_widths[k] = label_headers[k]
            .chars()
            .count()
            .max(label_rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0));
    }

    let metric_headers = ["MSE", "LCC", "SRCC"];
    let ncols = grid.encoders.len() * 3;
    let mut col_widths = vec![0usize; ncols];
    for (j, width) in col_widths.iter_mut().enumerate() {
        *width = metric_headers[j % 3].chars().count().max(
            value_rows
                .iter()
                .map(|r| r[j].chars().count())
                .max()
                .unwrap_or(0),
        );
    }
    // Encoder banner spans its three metric columns.
    for (e, enc) in grid.encoders.iter().enumerate() {
        let name_len = display_name(enc).chars().count();
        let group: usize = col_widths[e * 3..e * 3 + 3].iter().sum::<usize>() + 4;
        if name_len > group {
            col_widths[e * 3 + 2] += name_len - group;
        }
    }

    let pad = |s: &str, w: usize| {
        let len = s.chars().count();
        format!("{s}{}", " ".repeat(w.saturating_sub(len)))
    };
    let rpad = |s: &str, w: usize| {
        let len = s.chars().count();
        format!("{}{s}", " ".repeat(w.saturating_sub(len)))
    };

    let mut out = String::new();

    // Banner row with encoder names.
    for (k, h) in label_headers.iter().enumerate() {
        out.push_str(&pad(h, label_widths[k]));
        out.push_str("  ");
    }
    for (e, enc) in grid.encoders.iter().enumerate() {
        let group: usize = col_widths[e * 3..e * 3 + 3].iter().sum::<usize>() + 4;
        out.push_str("| ");
        out.push_str(&pad(&display_name(enc), group));
        out.push(' ');
    }
    out.push('\n');

    // Metric header row.
    for width in label_widths {
        out.push_str(&" ".repeat(width));
        out.push_str("  ");
    }
    for e in 0..grid.encoders.len() {
        out.push_str("| ");
        for (m, h) in metric_headers.iter().enumerate() {
            out.push_str(&rpad(h, col_widths[e * 3 + m]));
            if m < 2 {
                out.push_str("  ");
            }
        }
        out.push(' ');
    }
    out.push('\n');

    let total_width = label_widths.iter().sum::<usize>()
        + 6
        + grid
            .encoders
            .iter()
            .enumerate()
            .map(|(e, _)| col_widths[e * 3..e * 3 + 3].iter().sum::<usize>() + 7)
            .sum::<usize>();
    out.push_str(&"-".repeat(total_width));
    out.push('\n');

    for (labels, values) in label_rows.iter().zip(&value_rows) {
        for (k, cell) in labels.iter().enumerate() {
            out.push_str(&pad(cell, label_widths[k]));
            out.push_str("  ");
        }
        for e in 0..grid.encoders.len() {
            out.push_str("| ");
            for m in 0..3 {
                out.push_str(&rpad(&values[e * 3 + m], col_widths[e * 3 + m]));
                if m < 2 {
                    out.push_str("  ");
                }
            }
            out.push(' ');
        }
        out.push('\n');
    }

    Ok(out)
}
