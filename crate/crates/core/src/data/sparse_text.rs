//! Index-list text format for sparse binary datasets (the UCI evaluation
//! suite family).
//!
//! First line: the feature count. Every following non-empty line is one
//! sample: space-separated indices of its active features, optionally
//! preceded by `label:`. Example with 4 features:
//!
//! ```text
//! 4
//! 3: 0 2
//! 1:
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;

pub fn load_sparse_binary(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let n_features: usize = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((lineno, line)) => {
                break line.trim().parse().map_err(|_| {
                    Error::Parse(format!(
                        "{}:{}: expected the feature count, got '{}'",
                        path.display(),
                        lineno + 1,
                        line.trim()
                    ))
                })?
            }
            None => {
                return Err(Error::Parse(format!("{}: empty file", path.display())));
            }
        }
    };
    if n_features == 0 {
        return Err(Error::Parse(format!(
            "{}: feature count must be positive",
            path.display()
        )));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut any_unlabeled = false;
    let mut count = 0usize;
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (label, indices) = match line.split_once(':') {
            Some((l, rest)) => {
                let label: usize = l.trim().parse().map_err(|_| {
                    Error::Parse(format!(
                        "{}:{}: invalid label '{}'",
                        path.display(),
                        lineno + 1,
                        l.trim()
                    ))
                })?;
                (Some(label), rest)
            }
            None => (None, line),
        };
        match label {
            Some(l) => labels.push(l),
            None => any_unlabeled = true,
        }
        let start = rows.len();
        rows.resize(start + n_features, 0.0);
        for tok in indices.split_whitespace() {
            let idx: usize = tok.parse().map_err(|_| {
                Error::Parse(format!(
                    "{}:{}: invalid index '{tok}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            if idx >= n_features {
                return Err(Error::Parse(format!(
                    "{}:{}: index {idx} out of range for {n_features} features",
                    path.display(),
                    lineno + 1
                )));
            }
            rows[start + idx] = 1.0;
        }
        count += 1;
    }
    if any_unlabeled && !labels.is_empty() {
        return Err(Error::Parse(format!(
            "{}: mixes labeled and unlabeled samples",
            path.display()
        )));
    }
    Dataset::new(
        BatchMatrix::from_vec(count, n_features, rows)?,
        (!labels.is_empty()).then_some(labels),
        FeatureKind::Binary,
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sparse".into()),
    )
}

pub fn write_sparse_binary(path: &Path, dataset: &Dataset) -> Result<()> {
    if dataset.feature_kind != FeatureKind::Binary {
        return Err(Error::InvalidParameter(
            "index-list format stores binary features only".into(),
        ));
    }
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", dataset.n_features())?;
    for r in 0..dataset.len() {
        let indices: Vec<String> = dataset
            .features
            .row(r)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i.to_string())
            .collect();
        match dataset.labels.as_ref() {
            Some(l) => writeln!(f, "{}: {}", l[r], indices.join(" "))?,
            None => writeln!(f, "{}", indices.join(" "))?,
        }
    }
    Ok(())
}
