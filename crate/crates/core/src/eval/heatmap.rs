//! Plot-ready transport-plan export: a labeled CSV grid plus a JSON sidecar
//! carrying the full plan.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ot::TransportPlan;

use super::{EvalError, Result};

/// A re-imported heatmap: labels plus the weight grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanHeatmap {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub weights: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    row_names: Vec<String>,
    col_names: Vec<String>,
    plan: serde_json::Value,
}

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn bad_file(path: &Path, message: impl Into<String>) -> EvalError {
    EvalError::BadFile {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Column labels: reuse the row names on square plans (view-by-view
/// couplings); otherwise the columns are learned references.
fn column_names(plan: &TransportPlan, row_names: &[String]) -> Vec<String> {
    if plan.cols() == row_names.len() {
        row_names.to_vec()
    } else {
        (0..plan.cols()).map(|k| format!("cluster_{k}")).collect()
    }
}

/// Writes `path` as a CSV grid (header row of column labels, one labeled
/// row per view, cells at 17 significant digits) and a `.json` sidecar next
/// to it with the same weights in the plan's serialized form plus both label
/// vectors. Returns the sidecar path.
pub fn export_plan_heatmap(
    plan: &TransportPlan,
    row_names: &[String],
    path: &Path,
) -> Result<PathBuf> {
    if row_names.len() != plan.rows() {
        return Err(EvalError::NameCountMismatch {
            rows: row_names.len(),
            expected: plan.rows(),
        });
    }
    let col_names = column_names(plan, row_names);

    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| bad_file(path, e.to_string()))?;
    let mut header = vec!["view".to_string()];
    header.extend(col_names.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| bad_file(path, e.to_string()))?;
    for (row, name) in plan.weights.rows().into_iter().zip(row_names) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|w| format!("{w:.16e}")));
        writer
            .write_record(&record)
            .map_err(|e| bad_file(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;

    let sidecar_path = path.with_extension("json");
    let plan_value: serde_json::Value =
        serde_json::from_str(&plan.to_json_string()?).expect("plan serialization is valid JSON");
    let sidecar = Sidecar {
        row_names: row_names.to_vec(),
        col_names,
        plan: plan_value,
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&sidecar_path, text).map_err(|e| io_err(&sidecar_path, e))?;
    Ok(sidecar_path)
}

/// Reads a heatmap CSV written by [`export_plan_heatmap`] back into labels
/// and weights. Lossless for values written at 17 significant digits.
pub fn read_plan_heatmap(path: &Path) -> Result<PlanHeatmap> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| bad_file(path, e.to_string()))?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| bad_file(path, "empty file"))?
        .map_err(|e| bad_file(path, e.to_string()))?;
    if header.len() < 2 {
        return Err(bad_file(path, "header needs at least one column label"));
    }
    let col_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut row_names = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (line, record) in records.enumerate() {
        let record = record.map_err(|e| bad_file(path, e.to_string()))?;
        if record.len() != col_names.len() + 1 {
            return Err(bad_file(
                path,
                format!(
                    "row {} has {} cells, expected {}",
                    line + 2,
                    record.len(),
                    col_names.len() + 1
                ),
            ));
        }
        row_names.push(record[0].to_string());
        for cell in record.iter().skip(1) {
            let value: f64 = cell
                .parse()
                .map_err(|_| bad_file(path, format!("bad number `{cell}` on row {}", line + 2)))?;
            values.push(value);
        }
    }
    if row_names.is_empty() {
        return Err(bad_file(path, "no data rows"));
    }
    let weights = Array2::from_shape_vec((row_names.len(), col_names.len()), values)
        .expect("dimensions checked per row");
    Ok(PlanHeatmap {
        row_names,
        col_names,
        weights,
    })
}
