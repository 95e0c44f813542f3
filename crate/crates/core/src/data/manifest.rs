//! JSON manifest + CSV interchange format.
//!
//! A dataset directory holds one `manifest.json` naming the per-view CSV
//! files (one sample per row, comma-separated floats, no header, LF line
//! endings), an optional labels CSV (one class id per row), and an optional
//! planted-partition JSON for synthetic data. Everything loaded through
//! [`load_manifest`] is standardized per feature, so consumers always see
//! zero-mean / unit-variance views.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, MultiViewDataset, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    name: String,
    views: Vec<ViewEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    planted_file: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewEntry {
    name: String,
    file: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantedFile {
    assignments: Vec<usize>,
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a dataset directory via its manifest, validates shapes, and
/// standardizes every view. The result is marked aligned: manifests describe
/// datasets with known row correspondence, and the split protocol is what
/// removes it.
pub fn load_manifest(manifest_path: &Path) -> Result<MultiViewDataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: ManifestFile =
        serde_json::from_str(&text).map_err(|e| DataError::Json {
            path: manifest_path.display().to_string(),
            message: e.to_string(),
        })?;
    if manifest.views.is_empty() {
        return Err(DataError::InvalidSpec(format!(
            "{}: manifest lists no views",
            manifest_path.display()
        )));
    }

    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut views = Vec::with_capacity(manifest.views.len());
    let mut names = Vec::with_capacity(manifest.views.len());
    let mut first: Option<(String, usize)> = None;
    for entry in &manifest.views {
        let path = dir.join(&entry.file);
        let view = read_view_csv(&path, entry.dim)?;
        if let Some((ref file_a, n_a)) = first {
            if view.nrows() != n_a {
                return Err(DataError::RowCountMismatch {
                    file_a: file_a.clone(),
                    n_a,
                    file_b: entry.file.clone(),
                    n_b: view.nrows(),
                });
            }
        } else {
            first = Some((entry.file.clone(), view.nrows()));
        }
        views.push(view);
        names.push(entry.name.clone());
    }
    let n = views[0].nrows();

    let labels = match &manifest.labels_file {
        Some(file) => {
            let labels = read_labels_csv(&dir.join(file))?;
            if labels.len() != n {
                return Err(DataError::LabelCountMismatch {
                    file: file.clone(),
                    expected: n,
                    got: labels.len(),
                });
            }
            Some(labels)
        }
        None => None,
    };

    let planted = match &manifest.planted_file {
        Some(file) => {
            let path = dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let planted: PlantedFile =
                serde_json::from_str(&text).map_err(|e| DataError::Json {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            Some(planted.assignments)
        }
        None => None,
    };

    let mut dataset = MultiViewDataset::from_parts(
        views,
        names,
        labels,
        manifest.num_classes,
        true,
        planted,
        manifest_path.display().to_string(),
    )?;
    dataset.standardize();
    Ok(dataset)
}

/// Parses a headerless CSV of floats into an `N x dim` matrix.
fn read_view_csv(path: &Path, dim: usize) -> Result<Array2<f64>> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::Csv {
            file: file.clone(),
            line: 0,
            message: e.to_string(),
        })?;

    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (index, record) in reader.records().enumerate() {
        let line = index + 1;
        let record = record.map_err(|e| DataError::Csv {
            file: file.clone(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != dim {
            return Err(DataError::RaggedRow {
                file,
                line,
                expected: dim,
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| DataError::Csv {
                file: file.clone(),
                line,
                message: format!("column {}: `{}` is not a number", col + 1, cell),
            })?;
            values.push(value);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, dim), values).map_err(|e| DataError::Csv {
        file,
        line: 0,
        message: e.to_string(),
    })
}

/// Parses a one-column CSV of class ids.
fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut labels = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let label: usize = trimmed.parse().map_err(|_| DataError::Csv {
            file: file.clone(),
            line: index + 1,
            message: format!("`{trimmed}` is not a class id"),
        })?;
        labels.push(label);
    }
    Ok(labels)
}

/// Writes a dataset directory: `manifest.json`, one CSV per view (floats at
/// 17 significant digits, so values round-trip exactly), a labels CSV when
/// labels are present, and a planted-partition JSON when present. Fails if
/// the directory already contains a manifest, unless `force` is set.
pub fn write_dataset(dataset: &MultiViewDataset, dir: &Path, name: &str, force: bool) -> Result<PathBuf> {
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() && !force {
        return Err(DataError::OutputExists(dir.display().to_string()));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut entries = Vec::with_capacity(dataset.num_views());
    for (s, view_name) in dataset.view_names().iter().enumerate() {
        let file = format!("{view_name}.csv");
        let path = dir.join(&file);
        write_matrix_csv(&path, dataset.view(s))?;
        entries.push(ViewEntry {
            name: view_name.clone(),
            file,
            dim: dataset.view_dim(s),
        });
    }

    let labels_file = match dataset.labels() {
        Some(labels) => {
            let file = "labels.csv".to_string();
            let path = dir.join(&file);
            let mut text = String::new();
            for label in labels {
                text.push_str(&label.to_string());
                text.push('\n');
            }
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
            Some(file)
        }
        None => None,
    };

    let planted_file = match dataset.planted() {
        Some(assignments) => {
            let file = "planted.json".to_string();
            let path = dir.join(&file);
            let body = serde_json::to_string_pretty(&PlantedFile {
                assignments: assignments.to_vec(),
            })
            .expect("planted serialization cannot fail");
            fs::write(&path, body).map_err(|e| io_err(&path, e))?;
            Some(file)
        }
        None => None,
    };

    let manifest = ManifestFile {
        name: name.to_string(),
        views: entries,
        labels_file,
        num_classes: dataset.num_classes(),
        planted_file,
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Json {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(&manifest_path, body).map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest_path)
}

fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in m.rows() {
        let mut first = true;
        for &v in row {
            if !first {
                w.write_all(b",").map_err(|e| io_err(path, e))?;
            }
            write!(w, "{v:.16e}").map_err(|e| io_err(path, e))?;
            first = false;
        }
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
