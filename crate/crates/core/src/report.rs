//! Report emission: JSON (nested) and CSV (flat, one row per run).

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::{Comparison, RunOutcome, RunRecord, SweepRow};
use crate::metrics::{ClassCoverage, SizeDelta, WorstClassComparison};

/// Keys every run record carries, in CSV column order.
pub const RECORD_KEYS: [&str; 18] = [
    "alpha",
    "method",
    "lambda",
    "kreg",
    "u_mode",
    "T",
    "seed",
    "n_cal",
    "n_test",
    "q_alpha",
    "coverage",
    "avg_set_size",
    "cov_gap",
    "mccc",
    "ece",
    "accuracy",
    "empty_set_fraction",
    "model",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path.to_path_buf())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn write_per_class(path: &Path, per_class: &ClassCoverage) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "coverage"])?;
    for (c, v) in per_class {
        w.write_record([c.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn write_set_sizes(path: &Path, outcome: &RunOutcome) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "label", "size", "covered"])?;
    for (i, (s, &y)) in outcome.sets.iter().zip(&outcome.labels).enumerate() {
        w.write_record([i.to_string(), y.to_string(), s.size().to_string(), u8::from(s.contains(y)).to_string()])?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn run_json(outcome: &RunOutcome, model: &str) -> serde_json::Value {
    json!({
        "record": outcome.record_for(model),
        "per_class_coverage": outcome.report.per_class_coverage,
        "set_sizes": outcome.set_sizes(),
    })
}

/// Writes one run's report, per-class coverage and per-sample set sizes
/// into `dir` with file names prefixed by `stem`.
pub fn write_run(outcome: &RunOutcome, model: &str, dir: &Path, stem: &str, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Json => Ok(vec![write_json(&dir.join(format!("{stem}.json")), &run_json(outcome, model))?]),
        Format::Csv => Ok(vec![
            write_csv(&dir.join(format!("{stem}.csv")), &[outcome.record_for(model)])?,
            write_per_class(&dir.join(format!("{stem}_per_class_coverage.csv")), &outcome.report.per_class_coverage)?,
            write_set_sizes(&dir.join(format!("{stem}_set_sizes.csv")), outcome)?,
        ]),
    }
}

pub fn write_sweep(rows: &[SweepRow], model: &str, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let records: Vec<RunRecord> =
        rows.iter().map(|r| r.outcome.record_for(model)).collect();
    match format {
        Format::Json => {
            let value: Vec<_> = rows
                .iter()
                .zip(&records)
                .map(|(r, rec)| json!({ "record": rec, "per_class_coverage": r.outcome.report.per_class_coverage }))
                .collect();
            Ok(vec![write_json(&dir.join("sweep.json"), &value)?])
        }
        Format::Csv => Ok(vec![write_csv(&dir.join("sweep.csv"), &records)?]),
    }
}

/// Long-form records of a comparison, one per `(model, method)`.
pub fn comparison_records(cmp: &Comparison) -> Vec<RunRecord> {
    cmp.runs
        .iter()
        .map(|r| r.outcome.record_for(&r.model))
        .collect()
}

/// Wide table: one row per model, columns `method x {set size, MCCC, CovGap, coverage}`.
pub fn comparison_table(cmp: &Comparison) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["model".to_string(), "accuracy".to_string()];
    for spec in &cmp.methods {
        for metric in ["avg_set_size", "mccc", "cov_gap", "coverage"] {
            header.push(format!("{}_{metric}", spec.method));
        }
    }
    let rows = cmp
        .models
        .iter()
        .map(|model| {
            let runs: Vec<&RunOutcome> =
                cmp.runs.iter().filter(|r| &r.model == model).map(|r| &r.outcome).collect();
            let mut row = vec![model.clone(), runs.first().map_or(String::new(), |r| r.report.accuracy.to_string())];
            for r in runs {
                let m = &r.report;
                row.extend([m.avg_set_size, m.mccc, m.cov_gap, m.coverage].map(|v| v.to_string()));
            }
            row
        })
        .collect();
    (header, rows)
}

/// Writes `comparison.csv` and `comparison.json`.
pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let (header, rows) = comparison_table(cmp);
    let csv_path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(&header)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush()?;
    let runs: Vec<_> = cmp
        .runs
        .iter()
        .map(|r| run_json(&r.outcome, &r.model))
        .collect();
    let json_path = write_json(&dir.join("comparison.json"), &json!({ "runs": runs }))?;
    Ok(vec![csv_path, json_path])
}

pub fn write_worst_class(result: &WorstClassComparison, a: &str, b: &str, dir: &Path) -> Result<PathBuf> {
    write_json(&dir.join("worst_class.json"), &json!({ "run_a": a, "run_b": b, "result": result }))
}

pub fn write_size_delta(delta: &SizeDelta, a: &str, b: &str, dir: &Path) -> Result<PathBuf> {
    write_json(&dir.join("size_delta.json"), &json!({ "run_a": a, "run_b": b, "result": delta }))
}
