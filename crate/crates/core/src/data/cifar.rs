//! CIFAR-10 binary batches: 3073-byte records, label byte first.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;

const RECORD_BYTES: usize = 3073;
const PIXELS: usize = 3072;

/// Load one or more CIFAR-10 binary batch files, concatenated in order.
pub fn load_cifar10_binary<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::InvalidParameter("no CIFAR-10 batch files given".into()));
    }
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = fs::read(p)?;
        if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::Parse(format!(
                "{}: length {} is not a positive multiple of {RECORD_BYTES}",
                p.display(),
                bytes.len()
            )));
        }
        for record in bytes.chunks_exact(RECORD_BYTES) {
            labels.push(record[0] as usize);
            features.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let rows = labels.len();
    Dataset::new(
        BatchMatrix::from_vec(rows, PIXELS, features)?,
        Some(labels),
        FeatureKind::Rgb01,
        "cifar10",
    )
}

/// Fixture writer for the 3073-byte record format.
pub fn write_cifar10_binary(path: &Path, features: &BatchMatrix, labels: &[usize]) -> Result<()> {
    if features.cols() != PIXELS {
        return Err(Error::DimensionMismatch(format!(
            "CIFAR-10 records need {PIXELS} features, got {}",
            features.cols()
        )));
    }
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} records",
            labels.len(),
            features.rows()
        )));
    }
    let mut out = Vec::with_capacity(labels.len() * RECORD_BYTES);
    for (r, &label) in labels.iter().enumerate() {
        if label > u8::MAX as usize {
            return Err(Error::InvalidParameter(format!("label {label} exceeds one byte")));
        }
        out.push(label as u8);
        for &v in features.row(r) {
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_round_trip() {
        let dir = std::env::temp_dir().join("sparset_cifar_test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("batch.bin");
        // Hand-built record: label 3, pixels 0..=255 cycling.
        let mut bytes = vec![3u8];
        bytes.extend((0..PIXELS).map(|i| (i % 256) as u8));
        fs::write(&path, &bytes).unwrap();
        let d = load_cifar10_binary(&[&path]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels.as_ref().unwrap(), &vec![3]);
        assert_eq!(d.features.get(0, 0), 0.0);
        assert_eq!(d.features.get(0, 255), 1.0);

        let path2 = dir.join("batch2.bin");
        write_cifar10_binary(&path2, &d.features, d.labels.as_ref().unwrap()).unwrap();
        assert_eq!(fs::read(&path2).unwrap(), bytes);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = std::env::temp_dir().join("sparset_cifar_trunc");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        fs::write(&path, vec![0u8; RECORD_BYTES + 5]).unwrap();
        let err = load_cifar10_binary(&[&path]).unwrap_err();
        assert!(err.to_string().contains("multiple of 3073"));
        fs::remove_dir_all(&dir).ok();
    }
}
