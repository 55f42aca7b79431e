//! Dataset container, loaders for the on-disk formats, and synthetic
//! desk-scale generators.

mod cifar;
mod csv;
mod idx;
mod sparse_text;
mod synthetic;

pub use cifar::{load_cifar10_binary, write_cifar10_binary};
pub use csv::{load_csv_numeric, write_csv_numeric};
pub use idx::{load_idx, write_idx};
pub use sparse_text::{load_sparse_binary, write_sparse_binary};
pub use synthetic::{make_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;

/// Value domain of the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// All features in {0, 1}.
    Binary,
    /// Grayscale intensities in [0, 1].
    Grayscale01,
    /// RGB intensities in [0, 1].
    Rgb01,
    /// Unconstrained reals.
    Real,
}

/// Feature matrix with optional integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: BatchMatrix,
    pub labels: Option<Vec<usize>>,
    pub feature_kind: FeatureKind,
    pub name: String,
}

impl Dataset {
    pub fn new(
        features: BatchMatrix,
        labels: Option<Vec<usize>>,
        feature_kind: FeatureKind,
        name: impl Into<String>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} rows",
                    l.len(),
                    features.rows()
                )));
            }
        }
        let ok = match feature_kind {
            FeatureKind::Binary => features.data().iter().all(|&v| v == 0.0 || v == 1.0),
            FeatureKind::Grayscale01 | FeatureKind::Rgb01 => {
                features.data().iter().all(|&v| (0.0..=1.0).contains(&v))
            }
            FeatureKind::Real => true,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "features violate the {feature_kind:?} value range"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            feature_kind,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Number of classes (max label + 1) when labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |&m| m + 1))
    }

    /// Copy the given rows into a fresh batch.
    pub fn gather(&self, indices: &[usize]) -> Result<(BatchMatrix, Option<Vec<usize>>)> {
        let cols = self.n_features();
        let mut batch = BatchMatrix::zeros(indices.len(), cols);
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::InvalidParameter(format!(
                    "row index {i} out of range for {} samples",
                    self.len()
                )));
            }
            batch.row_mut(r).copy_from_slice(self.features.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok((batch, labels))
    }

    /// Contiguous row range [start, end).
    pub fn features_slice(&self, start: usize, end: usize) -> Result<BatchMatrix> {
        if start > end || end > self.len() {
            return Err(Error::InvalidParameter(format!(
                "slice {start}..{end} out of range for {} samples",
                self.len()
            )));
        }
        let indices: Vec<usize> = (start..end).collect();
        Ok(self.gather(&indices)?.0)
    }

    /// First `n` rows (desk-scale subsampling).
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        let features = self.features_slice(0, n)?;
        Dataset::new(
            features,
            self.labels.as_ref().map(|l| l[..n].to_vec()),
            self.feature_kind,
            self.name.clone(),
        )
    }

    /// Threshold grayscale/RGB features into {0, 1}. Applying it to an
    /// already-binary dataset is a no-op (callers may warn); the result
    /// is always idempotent under a second application.
    pub fn binarize(&self, threshold: f64) -> Dataset {
        if self.feature_kind == FeatureKind::Binary {
            return self.clone();
        }
        let mut features = self.features.clone();
        for v in features.data_mut() {
            *v = if *v >= threshold { 1.0 } else { 0.0 };
        }
        Dataset {
            features,
            labels: self.labels.clone(),
            feature_kind: FeatureKind::Binary,
            name: self.name.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_ranges_are_enforced() {
        let m = BatchMatrix::from_vec(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        assert!(Dataset::new(m.clone(), None, FeatureKind::Binary, "x").is_err());
        assert!(Dataset::new(m.clone(), None, FeatureKind::Grayscale01, "x").is_ok());
        let neg = BatchMatrix::from_vec(1, 1, vec![-0.1]).unwrap();
        assert!(Dataset::new(neg, None, FeatureKind::Rgb01, "x").is_err());
    }

    #[test]
    fn binarize_thresholds_and_is_idempotent() {
        let m = BatchMatrix::from_vec(1, 3, vec![0.2, 0.5, 0.9]).unwrap();
        let d = Dataset::new(m, None, FeatureKind::Grayscale01, "g").unwrap();
        let b = d.binarize(0.5);
        assert_eq!(b.features.data(), &[0.0, 1.0, 1.0]);
        assert_eq!(b.feature_kind, FeatureKind::Binary);
        let bb = b.binarize(0.5);
        assert_eq!(bb.features.data(), b.features.data());
    }

    #[test]
    fn gather_and_slice() {
        let m = BatchMatrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let d = Dataset::new(m, Some(vec![0, 1, 0]), FeatureKind::Real, "t").unwrap();
        let (b, l) = d.gather(&[2, 0]).unwrap();
        assert_eq!(b.row(0), &[5., 6.]);
        assert_eq!(l.unwrap(), vec![0, 0]);
        assert!(d.gather(&[9]).is_err());
        let s = d.features_slice(1, 3).unwrap();
        assert_eq!(s.row(0), &[3., 4.]);
    }
}
