//! Per-iteration CSV telemetry and the JSON run summary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelFamily;
use crate::optimize::RunRecord;

pub const CSV_HEADER: [&str; 7] = [
    "iteration",
    "wall_seconds",
    "robust_value",
    "worst_index",
    "running_best",
    "eval_seconds",
    "gd_seconds",
];

/// Writes the results table. Assignments are rendered `hole=option;...`.
pub fn write_results_csv<W: Write>(family: &ModelFamily, records: &[RunRecord], out: W) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(ser)?;
    for r in records {
        w.write_record([
            r.iteration.to_string(),
            r.wall_seconds.to_string(),
            r.robust_value.to_string(),
            family.format_assignment(&r.worst_index),
            r.running_best.to_string(),
            r.eval_seconds.to_string(),
            r.gd_seconds.to_string(),
        ])
        .map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

pub fn results_csv_string(family: &ModelFamily, records: &[RunRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_results_csv(family, records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Serialize(e.to_string()))
}

pub fn write_results_file(family: &ModelFamily, records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results_csv(family, records, std::io::BufWriter::new(file))
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub model: String,
    pub method: String,
    pub objective: String,
    pub robust_value: Option<f64>,
    pub worst_index: Option<BTreeMap<String, String>>,
    pub iterations: usize,
    pub instance_count: String,
    pub memory_nodes: usize,
    pub config: BTreeMap<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn write_summary(summary: &Summary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Serialize(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::reward_family;
    use crate::model::Assignment;

    #[test]
    fn header_and_rows() {
        let fam = reward_family(&[1.0, 2.0]);
        let rec = RunRecord {
            iteration: 0,
            wall_seconds: 0.5,
            robust_value: 1.0,
            worst_index: Assignment(vec![0]),
            running_best: 1.0,
            eval_seconds: 0.25,
            gd_seconds: 0.25,
            train_index: Assignment(vec![0]),
        };
        let text = results_csv_string(&fam, &[rec]).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("iteration,wall_seconds,robust_value,worst_index,running_best,eval_seconds,gd_seconds")
        );
        assert_eq!(lines.next(), Some("0,0.5,1,h=o0,1,0.25,0.25"));
    }
}
