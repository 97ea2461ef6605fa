//! Long-format comparison table over experiment directories.

use std::path::{Path, PathBuf};

use super::experiment::{HarnessError, Summary, SUMMARY_FILE};
use crate::trace::TraceRow;

pub const COMPARE_HEADER: [&str; 5] = ["method", "seed", "checkpoint_epochs", "accuracy", "loss"];

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: String,
    pub seed: u64,
    pub checkpoint_epochs: f64,
    pub accuracy: f64,
    pub loss: f64,
}

fn read_trace(path: &Path) -> Result<Vec<TraceRow>, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = reader.headers().map_err(|e| e.to_string())?.iter().collect::<Vec<_>>().join(",");
    if header != crate::trace::TRACE_HEADER {
        return Err("unexpected header".into());
    }
    let rows = reader
        .deserialize::<TraceRow>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    if rows.is_empty() {
        return Err("no rows".into());
    }
    Ok(rows)
}

fn row_at(rows: &[TraceRow], epochs: f64) -> &TraceRow {
    rows.iter()
        .take_while(|r| r.epochs <= epochs + 1e-12)
        .last()
        .unwrap_or(&rows[0])
}

/// Collects rows from every directory; unreadable inputs are skipped with a
/// warning on stderr.
pub fn collect_rows(dirs: &[PathBuf]) -> Vec<CompareRow> {
    let mut out = Vec::new();
    for dir in dirs {
        let summary_path = dir.join(SUMMARY_FILE);
        let summary: Summary = match std::fs::read_to_string(&summary_path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(s) => s,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", summary_path.display());
                continue;
            }
        };
        for result in &summary.finals {
            let path = dir.join(&result.trace_file);
            let rows = match read_trace(&path) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("warning: skipping {}: {e}", path.display());
                    continue;
                }
            };
            for &c in &summary.checkpoints {
                let r = row_at(&rows, c);
                out.push(CompareRow {
                    method: summary.method.to_string(),
                    seed: result.seed,
                    checkpoint_epochs: c,
                    accuracy: r.train_acc,
                    loss: r.loss,
                });
            }
        }
    }
    // stable: checkpoints keep their configured order
    out.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
    out
}

/// Writes the comparison CSV and returns the number of data rows.
pub fn compare_report(dirs: &[PathBuf], out: &Path) -> Result<usize, HarnessError> {
    let rows = collect_rows(dirs);
    let io = |e: csv::Error| HarnessError::Io { path: out.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(out).map_err(io)?;
    w.write_record(COMPARE_HEADER).map_err(io)?;
    for r in &rows {
        w.write_record([
            r.method.clone(),
            r.seed.to_string(),
            r.checkpoint_epochs.to_string(),
            r.accuracy.to_string(),
            r.loss.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: out.to_path_buf(), source })?;
    Ok(rows.len())
}
