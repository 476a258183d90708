//! Result tables: models as rows, benchmark test sets as columns.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::models::ModelId;
use super::report::{CellStatus, EvalReport};
use crate::data::BenchmarkId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::Config(format!("unknown table format '{s}'"))),
        }
    }
}

/// Four significant digits, fixed notation.
pub fn format_score(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let decimals = (3 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

struct Grid {
    columns: Vec<(BenchmarkId, &'static str, String)>,
    rows: Vec<(ModelId, Vec<String>)>,
}

fn build(reports: &[EvalReport]) -> Grid {
    let mut columns = Vec::new();
    for b in BenchmarkId::ALL {
        let Some(r) = reports.iter().find(|r| r.benchmark_id == b) else { continue };
        for &t in b.test_set_names() {
            columns.push((b, t, format!("{} {} [{}]", b.display_name(), t, r.report_unit)));
        }
    }
    let mut rows = Vec::new();
    for m in ModelId::ALL {
        if !reports.iter().any(|r| r.model_id == m) {
            continue;
        }
        let cells = columns
            .iter()
            .map(|(b, t, _)| {
                let Some(r) = reports.iter().find(|r| r.model_id == m && r.benchmark_id == *b) else {
                    return "-".to_string();
                };
                match r.score(t) {
                    Some(s) => match s.display_rmse {
                        Some(v) => format_score(v),
                        None => "fail".to_string(),
                    },
                    None if matches!(r.status, CellStatus::Failed { .. }) => "fail".to_string(),
                    None => "-".to_string(),
                }
            })
            .collect();
        rows.push((m, cells));
    }
    Grid { columns, rows }
}

/// Renders the table; the output depends only on the report contents.
pub fn emit_table(reports: &[EvalReport], format: TableFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to tabulate"));
    }
    let g = build(reports);
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["model".to_string()];
            header.extend(g.columns.iter().map(|c| c.2.clone()));
            w.write_record(&header).map_err(|e| Error::Serde(e.to_string()))?;
            for (m, cells) in &g.rows {
                let mut rec = vec![m.display_name().to_string()];
                rec.extend(cells.iter().cloned());
                w.write_record(&rec).map_err(|e| Error::Serde(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
        }
        TableFormat::Markdown => {
            let mut s = String::from("| Model |");
            for c in &g.columns {
                s.push_str(&format!(" {} |", c.2));
            }
            s.push_str("\n|---|");
            for _ in &g.columns {
                s.push_str("---:|");
            }
            s.push('\n');
            for (m, cells) in &g.rows {
                s.push_str(&format!("| {} |", m.display_name()));
                for c in cells {
                    s.push_str(&format!(" {c} |"));
                }
                s.push('\n');
            }
            Ok(s)
        }
    }
}

pub fn write_table(reports: &[EvalReport], format: TableFormat, path: &Path) -> Result<()> {
    let text = emit_table(reports, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
