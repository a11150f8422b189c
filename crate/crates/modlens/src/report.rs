//! Evaluation report bundle: `report.jsonl`, `roc.csv` and `series.csv`.

use std::path::Path;

use modlens_core::eval::{roc_csv, series_csv, EvaluationReport};
use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus::write_jsonl;
use crate::error::{Error, Result};

pub const REPORT: &str = "report.jsonl";
pub const ROC: &str = "roc.csv";
pub const SERIES: &str = "series.csv";

/// Line records of the report: the run configuration, the classification
/// metrics, then one record per series point.
pub fn report_records(report: &EvaluationReport, run: &impl Serialize) -> Vec<Value> {
    let c = &report.classification;
    let mut out = vec![
        json!({ "record": "run", "config": run }),
        json!({
            "record": "classification",
            "accuracy": c.accuracy,
            "auc": c.auc,
            "average_precision": c.average_precision,
        }),
    ];
    for p in &report.series {
        let r = &p.report;
        out.push(json!({
            "record": "series",
            "method": p.method,
            "setting": p.setting,
            "precision": r.precision,
            "selected_fraction": r.selected_fraction,
            "mean_segment_length": r.mean_segment_length,
            "selected": r.selected,
            "selected_gold": r.selected_gold,
            "words": r.words,
        }));
    }
    out
}

pub fn write_report(dir: &Path, report: &EvaluationReport, run: &impl Serialize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(REPORT), report_records(report, run))?;
    let roc = dir.join(ROC);
    std::fs::write(&roc, roc_csv(&report.classification.roc)).map_err(|e| Error::io(&roc, e))?;
    let series = dir.join(SERIES);
    std::fs::write(&series, series_csv(&report.series)).map_err(|e| Error::io(&series, e))
}
