use std::fs;
use std::path::Path;

use serde::Serialize;

use super::bench::{table1_rows, table4_columns, BenchRow, BenchSpec, BenchmarkTable, CellMetrics, CellOutcome};
use super::svg::overlay_plot;
use super::{hardware_string, EvalError};

pub const RESULTS_CSV_HEADER: [&str; 10] = [
    "model",
    "solver",
    "task",
    "mae",
    "rmse",
    "mae_per_axis",
    "rmse_per_axis",
    "params",
    "time_ms_mean",
    "seed",
];

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn csv_bytes(rows: &[Vec<String>]) -> Result<Vec<u8>, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(|e| EvalError::Invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| EvalError::Invalid(e.to_string()))
}

fn results_rows(table: &BenchmarkTable) -> Vec<Vec<String>> {
    let mut rows = vec![RESULTS_CSV_HEADER.map(String::from).to_vec()];
    for r in &table.rows {
        let mut row = vec![r.model.clone(), r.solver.clone(), r.task.clone()];
        match &r.outcome {
            CellOutcome::Done(m) => row.extend([
                num(m.mae),
                num(m.rmse),
                joined(&m.mae_per_axis),
                joined(&m.rmse_per_axis),
                m.params.to_string(),
                num(m.time_ms_mean),
            ]),
            CellOutcome::Failed(reason) => {
                let cell = format!("FAIL:{}", reason.replace(['\n', '\r'], " "));
                row.extend(std::iter::repeat_n(cell, 6));
            }
        }
        row.push(r.seed.to_string());
        rows.push(row);
    }
    rows
}

#[derive(Serialize)]
struct Provenance<'a> {
    crate_version: &'static str,
    hardware: String,
    spec: &'a BenchSpec,
}

#[derive(Serialize)]
struct ResultsJson<'a> {
    provenance: Provenance<'a>,
    rows: &'a [BenchRow],
}

/// `results.csv` and `results.json` for the rows completed so far.
pub fn write_results(dir: &Path, table: &BenchmarkTable, spec: &BenchSpec) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_atomic(&dir.join("results.csv"), &csv_bytes(&results_rows(table))?)?;
    let json = ResultsJson {
        provenance: Provenance {
            crate_version: env!("CARGO_PKG_VERSION"),
            hardware: hardware_string(),
            spec,
        },
        rows: &table.rows,
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| EvalError::Invalid(e.to_string()))?;
    write_atomic(&dir.join("results.json"), (text + "\n").as_bytes())
}

/// Writes the results files, the table layouts for whichever task families
/// the spec covers, and one prediction-vs-truth SVG per successful cell
/// under `plots/`.
pub fn emit_report(table: &BenchmarkTable, spec: &BenchSpec, dir: &Path) -> Result<(), EvalError> {
    write_results(dir, table, spec)?;
    if spec.suite.includes_task1() {
        write_atomic(&dir.join("table1.csv"), &csv_bytes(&table1_rows(table))?)?;
    }
    if spec.suite.includes_task2() {
        write_atomic(&dir.join("table4.csv"), &csv_bytes(&table4_columns(table))?)?;
    }
    if !table.traces.is_empty() {
        let plots = dir.join("plots");
        fs::create_dir_all(&plots).map_err(|e| io_err(&plots, e))?;
        for t in &table.traces {
            let svg = overlay_plot(&t.label, &t.times, &t.truth, &t.pred);
            write_atomic(&plots.join(format!("{}.svg", t.label)), svg.as_bytes())?;
        }
    }
    Ok(())
}

fn parse_num(path: &Path, s: &str) -> Result<f64, EvalError> {
    s.parse().map_err(|_| io_err(path, format!("not a number: {s:?}")))
}

fn parse_list(path: &Path, s: &str) -> Result<Vec<f64>, EvalError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|p| parse_num(path, p)).collect()
}

/// Parses a `results.csv` written by [`write_results`].
pub fn read_results_csv(path: &Path) -> Result<Vec<BenchRow>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.clone();
    if header.iter().ne(RESULTS_CSV_HEADER) {
        return Err(io_err(path, "unexpected header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let outcome = match rec[3].strip_prefix("FAIL:") {
            Some(reason) => CellOutcome::Failed(reason.to_string()),
            None => CellOutcome::Done(CellMetrics {
                mae: parse_num(path, &rec[3])?,
                rmse: parse_num(path, &rec[4])?,
                mae_per_axis: parse_list(path, &rec[5])?,
                rmse_per_axis: parse_list(path, &rec[6])?,
                params: rec[7].parse().map_err(|_| io_err(path, "bad params"))?,
                time_ms_mean: parse_num(path, &rec[8])?,
            }),
        };
        rows.push(BenchRow {
            model: rec[0].to_string(),
            solver: rec[1].to_string(),
            task: rec[2].to_string(),
            seed: rec[9].parse().map_err(|_| io_err(path, "bad seed"))?,
            outcome,
        });
    }
    Ok(rows)
}
