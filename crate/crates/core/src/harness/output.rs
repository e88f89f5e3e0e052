//! Result files: `results.csv`, `summary.json` and the solver traces.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdd::TraceRecord;

pub const CSV_HEADER: &str =
    "method,realization,round,train_loss,test_loss,test_accuracy,selected_count,r_value,max_gain";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub realization: usize,
    pub round: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub selected_count: usize,
    pub r_value: f64,
    pub max_gain: f64,
}

/// Nine significant digits in scientific notation; the output never depends
/// on locale.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        format!("{v}")
    }
}

/// `v` as it reads back after [`format_float`].
pub fn round_to_csv(v: f64) -> f64 {
    format_float(v).parse().unwrap_or(v)
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.realization,
            r.round,
            format_float(r.train_loss),
            format_float(r.test_loss),
            format_float(r.test_accuracy),
            r.selected_count,
            format_float(r.r_value),
            format_float(r.max_gain)
        ));
    }
    out
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Format("results.csv header does not match".into()));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

/// One solver iteration, tagged with the cell and plan it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub method: String,
    pub realization: usize,
    /// Index of the plan within the run; cached plans have only index 0.
    pub plan: usize,
    #[serde(flatten)]
    pub record: TraceRecord,
}

pub fn traces_jsonl(lines: &[TraceLine]) -> Result<String> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes the three result files into `dir`, creating it if needed.
pub fn emit_results<S: Serialize>(dir: &Path, rows: &[ResultRow], summary: &S, traces: &[TraceLine]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("results.csv"), &results_csv(rows))?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::Format(e.to_string()))?;
    write(&dir.join("summary.json"), &(json + "\n"))?;
    write(&dir.join("pdd_traces.jsonl"), &traces_jsonl(traces)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64) -> ResultRow {
        ResultRow {
            method: "mrt".into(),
            realization: 3,
            round: 7,
            train_loss: v,
            test_loss: 2.0 * v,
            test_accuracy: 0.25,
            selected_count: 4,
            r_value: 1e12 * v,
            max_gain: 1e-9 * v,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(results_csv(&[]), format!("{CSV_HEADER}\n"));
        assert!(parse_results_csv(&results_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_float(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(format_float(-12345.678912345), "-1.23456789e4");
        assert_eq!(format_float(0.0), "0.00000000e0");
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn parse_inverts_emit() {
        let rows = vec![row(0.1234567891234), row(2.5)];
        let back = parse_results_csv(&results_csv(&rows)).unwrap();
        let rounded: Vec<ResultRow> = rows
            .iter()
            .map(|r| ResultRow {
                train_loss: round_to_csv(r.train_loss),
                test_loss: round_to_csv(r.test_loss),
                test_accuracy: round_to_csv(r.test_accuracy),
                r_value: round_to_csv(r.r_value),
                max_gain: round_to_csv(r.max_gain),
                ..r.clone()
            })
            .collect();
        assert_eq!(back, rounded);
        assert_eq!(results_csv(&back), results_csv(&rows));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_results_csv("method,round\nmrt,1\n").is_err());
    }
}
