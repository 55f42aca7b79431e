//! IDX image/label files (the MNIST on-disk format).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Parse(format!(
            "{}: truncated at byte {offset}",
            path.display()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Load an IDX image file plus the matching IDX label file; pixels are
/// scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let bytes = fs::read(images_path)?;
    let magic = read_u32_be(&bytes, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&bytes, 4, images_path)? as usize;
    let rows = read_u32_be(&bytes, 8, images_path)? as usize;
    let cols = read_u32_be(&bytes, 12, images_path)? as usize;
    let pixels = count * rows * cols;
    if bytes.len() != 16 + pixels {
        return Err(Error::Parse(format!(
            "{}: expected {} pixel bytes, found {}",
            images_path.display(),
            pixels,
            bytes.len().saturating_sub(16)
        )));
    }
    let data: Vec<f64> = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    let features = BatchMatrix::from_vec(count, rows * cols, data)?;

    let lbytes = fs::read(labels_path)?;
    let lmagic = read_u32_be(&lbytes, 0, labels_path)?;
    if lmagic != LABELS_MAGIC {
        return Err(Error::Parse(format!(
            "{}: bad magic {lmagic:#010x}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lcount = read_u32_be(&lbytes, 4, labels_path)? as usize;
    if lbytes.len() != 8 + lcount {
        return Err(Error::Parse(format!(
            "{}: expected {} label bytes, found {}",
            labels_path.display(),
            lcount,
            lbytes.len().saturating_sub(8)
        )));
    }
    if lcount != count {
        return Err(Error::Parse(format!(
            "{} images but {} labels",
            count, lcount
        )));
    }
    let labels: Vec<usize> = lbytes[8..].iter().map(|&b| b as usize).collect();

    Dataset::new(
        features,
        Some(labels),
        FeatureKind::Grayscale01,
        images_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".into()),
    )
}

/// Fixture writer: emit IDX files that `load_idx` reads back bit-exactly
/// (features quantized to the format's u8 resolution).
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    features: &BatchMatrix,
    labels: &[usize],
    rows: usize,
    cols: usize,
) -> Result<()> {
    if rows * cols != features.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} image does not match {} features",
            rows,
            cols,
            features.cols()
        )));
    }
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} images",
            labels.len(),
            features.rows()
        )));
    }
    let mut img = Vec::with_capacity(16 + features.data().len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(features.rows() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in features.data() {
        img.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    fs::File::create(images_path)?.write_all(&img)?;

    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > u8::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "label {l} does not fit the IDX byte format"
            )));
        }
        lab.push(l as u8);
    }
    fs::File::create(labels_path)?.write_all(&lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_fixture_round_trips() {
        // Two 2x2 images assembled byte by byte, independent of write_idx.
        let dir = std::env::temp_dir().join("sparset_idx_test");
        fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images.idx");
        let lab_path = dir.join("labels.idx");

        let mut img: Vec<u8> = Vec::new();
        img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&[0, 51, 102, 255, 255, 204, 153, 0]);
        fs::write(&img_path, &img).unwrap();

        let mut lab: Vec<u8> = Vec::new();
        lab.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lab.extend_from_slice(&2u32.to_be_bytes());
        lab.extend_from_slice(&[7, 3]);
        fs::write(&lab_path, &lab).unwrap();

        let d = load_idx(&img_path, &lab_path).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_features(), 4);
        assert_eq!(d.labels.as_ref().unwrap(), &vec![7, 3]);
        assert_eq!(d.features.get(0, 1), 51.0 / 255.0);
        assert_eq!(d.features.get(1, 3), 0.0);

        // Writer round trip over the loaded data.
        let img2 = dir.join("imgs2.idx");
        let lab2 = dir.join("labs2.idx");
        write_idx(&img2, &lab2, &d.features, d.labels.as_ref().unwrap(), 2, 2).unwrap();
        let d2 = load_idx(&img2, &lab2).unwrap();
        assert_eq!(d2.features.data(), d.features.data());
        assert_eq!(d2.labels, d.labels);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = std::env::temp_dir().join("sparset_idx_badmagic");
        fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images.idx");
        let lab_path = dir.join("labels.idx");
        let mut img: Vec<u8> = Vec::new();
        img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img.extend_from_slice(&1u32.to_be_bytes());
        img.extend_from_slice(&1u32.to_be_bytes());
        img.extend_from_slice(&1u32.to_be_bytes());
        img.push(9);
        fs::write(&img_path, &img).unwrap();
        // Labels file with the images magic: rejected.
        fs::write(&lab_path, &img).unwrap();
        let err = load_idx(&img_path, &lab_path).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = std::env::temp_dir().join("sparset_idx_trunc");
        fs::create_dir_all(&dir).unwrap();
        let img_path = dir.join("images.idx");
        let mut img: Vec<u8> = Vec::new();
        img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img.extend_from_slice(&5u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&[1, 2, 3]); // far fewer than 5*2*2 bytes
        fs::write(&img_path, &img).unwrap();
        let err = load_idx(&img_path, &img_path).unwrap_err();
        assert!(err.to_string().contains("expected 20 pixel bytes"));
        fs::remove_dir_all(&dir).ok();
    }
}
