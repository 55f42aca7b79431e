//! Header-less numeric CSV (the HIGGS distribution format).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;

/// Load a numeric CSV. When `label_column` is given, that column is
/// extracted as the integer class label (values are rounded; HIGGS stores
/// labels as floats).
pub fn load_csv_numeric(path: &Path, label_column: Option<usize>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut n_cols: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match n_cols {
            None => n_cols = Some(cells.len()),
            Some(c) if c != cells.len() => {
                return Err(Error::Parse(format!(
                    "{}:{}: {} columns, expected {}",
                    path.display(),
                    lineno + 1,
                    cells.len(),
                    c
                )));
            }
            _ => {}
        }
        if let Some(lc) = label_column {
            if lc >= cells.len() {
                return Err(Error::Parse(format!(
                    "{}:{}: label column {lc} out of range",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}:{}: column {}: '{}' is not numeric",
                    path.display(),
                    lineno + 1,
                    col + 1,
                    cell.trim()
                ))
            })?;
            if Some(col) == label_column {
                let rounded = value.round();
                if rounded < 0.0 || (value - rounded).abs() > 1e-9 {
                    return Err(Error::Parse(format!(
                        "{}:{}: label '{}' is not a non-negative integer",
                        path.display(),
                        lineno + 1,
                        cell.trim()
                    )));
                }
                labels.push(rounded as usize);
            } else {
                features.push(value);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse(format!("{}: empty file", path.display())));
    }
    let cols = n_cols.unwrap() - usize::from(label_column.is_some());
    Dataset::new(
        BatchMatrix::from_vec(rows, cols, features)?,
        label_column.map(|_| labels),
        FeatureKind::Real,
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into()),
    )
}

/// Fixture writer: labels (when present) are written into column
/// `label_column` with the remaining columns holding the features.
pub fn write_csv_numeric(path: &Path, dataset: &Dataset, label_column: Option<usize>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in 0..dataset.len() {
        let feat = dataset.features.row(r);
        let mut cells: Vec<String> = Vec::with_capacity(feat.len() + 1);
        cells.extend(feat.iter().map(|v| v.to_string()));
        if let (Some(lc), Some(labels)) = (label_column, dataset.labels.as_ref()) {
            cells.insert(lc.min(cells.len()), labels[r].to_string());
        }
        writeln!(f, "{}", cells.join(","))?;
    }
    Ok(())
}
