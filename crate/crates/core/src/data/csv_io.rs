//! Comma-separated feature tables: a header row, then one numeric row per subject.

use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(csv_err(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e.to_string()))?;
        let row_no = r + 1;
        if record.len() != header.len() {
            return Err(csv_err(
                path,
                format!("row {row_no} has {} cells, header has {}", record.len(), header.len()),
            ));
        }
        let mut row = Vec::with_capacity(header.len());
        for (cell, name) in record.iter().zip(&header) {
            let v: f64 = cell.parse().map_err(|_| {
                csv_err(path, format!("non-numeric cell {cell:?} at row {row_no}, column {name:?}"))
            })?;
            if !v.is_finite() {
                return Err(csv_err(path, format!("non-finite cell at row {row_no}, column {name:?}")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(RawTable { header, rows })
}

/// Loads a dataset; every column except `target_column` is a feature, in header order.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let target_idx = table
        .header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| csv_err(path, format!("target column {target_column:?} not found")))?;
    if table.rows.len() < 2 {
        return Err(csv_err(path, format!("need at least 2 data rows, found {}", table.rows.len())));
    }
    let feature_names: Vec<String> = table
        .header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(csv_err(path, "no feature columns"));
    }
    let d = feature_names.len();
    let mut values = Vec::with_capacity(table.rows.len() * d);
    let mut c = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        for (j, &v) in row.iter().enumerate() {
            if j == target_idx {
                c.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let x = Tensor::matrix(table.rows.len(), d, values)?;
    Dataset::new(x, c, feature_names, target_column, Provenance::Csv).map_err(|e| match e {
        Error::Data(msg) => csv_err(path, msg),
        other => other,
    })
}

/// Features aligned to a fixed name order, with the target when the file has it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub x: Tensor,
    pub target: Option<Vec<f64>>,
}

/// Loads the columns named in `feature_names` (any order in the file) plus an optional target.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    feature_names: &[String],
    target_column: Option<&str>,
) -> Result<FeatureTable> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if table.rows.is_empty() {
        return Err(csv_err(path, "no data rows"));
    }
    let find = |name: &str| table.header.iter().position(|h| h == name);
    let cols: Vec<usize> = feature_names
        .iter()
        .map(|n| find(n).ok_or_else(|| csv_err(path, format!("feature column {n:?} not found"))))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = table
        .rows
        .iter()
        .flat_map(|row| cols.iter().map(move |&j| row[j]))
        .collect();
    let target = target_column
        .and_then(find)
        .map(|t| table.rows.iter().map(|row| row[t]).collect());
    Ok(FeatureTable {
        x: Tensor::matrix(table.rows.len(), feature_names.len(), values)?,
        target,
    })
}

/// Writes features in order followed by the target column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let mut header = ds.feature_names.clone();
    header.push(ds.target_name.clone());
    w.write_record(&header).map_err(|e| csv_err(path, e.to_string()))?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.c[i].to_string());
        w.write_record(&rec).map_err(|e| csv_err(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
