//! Metrics files: a CSV trace plus a sibling JSON summary.
//!
//! Both are pure functions of the report minus its wall-clock time, so
//! rerunning a config produces byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gossipmf_core::sim::MetricsTrace;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{CvReport, ExperimentReport};

/// Header line of every trace CSV.
pub const CSV_HEADER: &str = "time,delivered,objective,rms";

/// Writes the trace as CSV. Floats use the shortest representation that
/// reads back exactly.
pub fn write_trace_csv<W: Write>(trace: &MetricsTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in &trace.samples {
        writeln!(out, "{},{},{},{}", s.time, s.delivered, s.objective, s.rms)?;
    }
    out.flush()
}

/// Resolved config as a JSON object. `churn` and `rating` map to arrays;
/// `metrics_out` is omitted so the summary does not depend on where it lands.
pub fn config_json(config: &RunConfig) -> Value {
    let mut map = Map::new();
    for (k, v) in config.to_pairs() {
        if k == "metrics_out" {
            continue;
        } else if k == "churn" || k == "rating" {
            map.entry(k)
                .or_insert_with(|| Value::Array(Vec::new()))
                .as_array_mut()
                .expect("array")
                .push(Value::String(v));
        } else {
            map.insert(k, Value::String(v));
        }
    }
    Value::Object(map)
}

/// Summary of a report. Wall-clock time is left out.
pub fn summary_json(report: &ExperimentReport) -> Value {
    let s = report.stats;
    json!({
        "config": config_json(&report.config),
        "summary": {
            "engine": report.config.engine.name(),
            "dataset": report.config.dataset.to_string(),
            "metric": report.metric.name(),
            "final_rms": report.final_rms,
            "final_objective": report.final_objective,
            "mean_offset": report.mean_offset,
            "num_train": report.num_train,
            "num_eval": report.num_eval,
            "iteration_budget": report.iteration_budget,
            "samples": report.trace.samples.len(),
            "stats": {
                "delivered": s.delivered,
                "dropped_dead": s.dropped_dead,
                "discarded_stale": s.discarded_stale,
                "updates_applied": s.updates_applied,
                "requests_sent": s.requests_sent,
            },
        },
    })
}

/// `path` with its extension replaced by `json`.
pub fn json_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn pretty(value: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the trace CSV to `path` and the summary to its `.json` sibling.
/// Returns the JSON path.
pub fn emit_metrics(report: &ExperimentReport, path: &Path) -> Result<PathBuf> {
    let mut csv = Vec::new();
    write_trace_csv(&report.trace, &mut csv).map_err(|e| Error::io(path, e))?;
    write_file(path, &csv)?;
    let json = json_path(path);
    write_file(&json, &pretty(&summary_json(report))?)?;
    Ok(json)
}

/// Writes `fold,rmse` rows to `path`, each fold's metrics next to it as
/// `<stem>.fold<k>.csv`, and a `.json` summary.
pub fn emit_cv(report: &CvReport, path: &Path) -> Result<PathBuf> {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut csv = String::from("fold,rmse\n");
    let mut folds = Vec::new();
    for (id, r) in &report.folds {
        csv.push_str(&format!("{id},{}\n", r.final_rms));
        let fold_path = path.with_file_name(format!("{stem}.fold{id}.csv"));
        emit_metrics(r, &fold_path)?;
        folds.push(json!({ "fold": id, "seed": r.config.seed, "rmse": r.final_rms }));
    }
    write_file(path, csv.as_bytes())?;
    let json = json_path(path);
    let summary = json!({
        "config": config_json(&report.config),
        "folds": folds,
        "mean_rmse": report.mean_rmse,
    });
    write_file(&json, &pretty(&summary)?)?;
    Ok(json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gossipmf_core::sim::TraceSample;

    #[test]
    fn csv_has_one_line_per_sample() {
        let mut trace = MetricsTrace::default();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,delivered,objective,rms\n");

        trace.samples = vec![
            TraceSample { time: 0.0, delivered: 0, objective: 12.5, rms: 1.25 },
            TraceSample { time: 3.5, delivered: 40, objective: 0.1, rms: f64::NAN },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(2), Some("3.5,40,0.1,NaN"));
    }

    #[test]
    fn config_json_groups_repeated_keys() {
        let c = RunConfig::parse("seed = 1\nengine = event\nchurn = 1 quit item 0\nchurn = 2 join item 0").unwrap();
        let v = config_json(&c);
        assert_eq!(v["churn"].as_array().unwrap().len(), 2);
        assert_eq!(v["engine"], "event");
        assert!(v.get("rating").is_none());
    }
}
