//! IDX binary files (the Fashion-MNIST container format): big-endian
//! magic and dimensions, then one unsigned byte per value.

use std::fs;
use std::path::Path;

use amlab_core::data::LabeledDataset;
use amlab_core::Matrix;

use crate::error::Error;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// How raw pixel bytes map to network inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PixelScaling {
    /// `byte / 255`, into `[0, 1]`.
    #[default]
    Unit,
    /// `(byte - 128) / 128`, the face-pipeline convention.
    Centered,
}

impl PixelScaling {
    fn apply(&self, byte: u8) -> f64 {
        match self {
            PixelScaling::Unit => byte as f64 / 255.0,
            PixelScaling::Centered => (byte as f64 - 128.0) / 128.0,
        }
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, Error> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxLength {
            path: path.display().to_string(),
            needed: end,
            got: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an image/label file pair into a dataset, flattening each
/// image row-major.
pub fn parse_idx(
    images_path: &Path,
    labels_path: &Path,
    scaling: PixelScaling,
) -> Result<LabeledDataset, Error> {
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let magic = read_u32_be(&image_bytes, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&image_bytes, 4, images_path)? as usize;
    let rows = read_u32_be(&image_bytes, 8, images_path)? as usize;
    let cols = read_u32_be(&image_bytes, 12, images_path)? as usize;
    let expected = 16 + count * rows * cols;
    if image_bytes.len() != expected {
        return Err(Error::IdxLength {
            path: images_path.display().to_string(),
            needed: expected,
            got: image_bytes.len(),
        });
    }

    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let magic = read_u32_be(&label_bytes, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32_be(&label_bytes, 4, labels_path)? as usize;
    let expected = 8 + label_count;
    if label_bytes.len() != expected {
        return Err(Error::IdxLength {
            path: labels_path.display().to_string(),
            needed: expected,
            got: label_bytes.len(),
        });
    }
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let dim = rows * cols;
    let data: Vec<f64> = image_bytes[16..]
        .iter()
        .map(|&b| scaling.apply(b))
        .collect();
    let labels: Vec<usize> = label_bytes[8..].iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    let inputs = Matrix::from_vec(count, dim, data)?;
    Ok(LabeledDataset::new(inputs, labels, class_count)?)
}

/// Writes an IDX image file from raw pixel bytes (row-major per image).
pub fn write_idx_images(
    path: &Path,
    count: usize,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> Result<(), Error> {
    if pixels.len() != count * rows * cols {
        return Err(Error::Config(format!(
            "pixel buffer holds {} bytes, header claims {}",
            pixels.len(),
            count * rows * cols
        )));
    }
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(count as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes an IDX label file.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), Error> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn two_by_two_pair_parses() {
        let dir = tmp();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        write_idx_images(&images, 2, 2, 2, &[0, 51, 102, 153, 204, 255, 0, 128]).unwrap();
        write_idx_labels(&labels, &[3, 1]).unwrap();
        let ds = parse_idx(&images, &labels, PixelScaling::Unit).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.labels, vec![3, 1]);
        assert_eq!(ds.class_count, 4);
        assert_eq!(ds.inputs.get(0, 1), 51.0 / 255.0);
        assert_eq!(ds.inputs.get(1, 1), 1.0);
    }

    #[test]
    fn centered_scaling() {
        let dir = tmp();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        write_idx_images(&images, 1, 1, 2, &[128, 0]).unwrap();
        write_idx_labels(&labels, &[0]).unwrap();
        let ds = parse_idx(&images, &labels, PixelScaling::Centered).unwrap();
        assert_eq!(ds.inputs.get(0, 0), 0.0);
        assert_eq!(ds.inputs.get(0, 1), -1.0);
    }

    #[test]
    fn wrong_magic_in_labels_file_rejected() {
        let dir = tmp();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        write_idx_images(&images, 1, 1, 1, &[7]).unwrap();
        // An images magic where a labels magic belongs.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(0);
        std::fs::write(&labels, bytes).unwrap();
        match parse_idx(&images, &labels, PixelScaling::Unit) {
            Err(Error::BadMagic {
                expected, found, ..
            }) => {
                assert_eq!(expected, LABELS_MAGIC);
                assert_eq!(found, IMAGES_MAGIC);
            }
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_image_payload_rejected() {
        let dir = tmp();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        write_idx_images(&images, 2, 2, 2, &[0; 8]).unwrap();
        write_idx_labels(&labels, &[0, 1]).unwrap();
        let bytes = std::fs::read(&images).unwrap();
        std::fs::write(&images, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            parse_idx(&images, &labels, PixelScaling::Unit),
            Err(Error::IdxLength { .. })
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tmp();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        write_idx_images(&images, 2, 1, 1, &[1, 2]).unwrap();
        write_idx_labels(&labels, &[0, 1, 0]).unwrap();
        assert!(matches!(
            parse_idx(&images, &labels, PixelScaling::Unit),
            Err(Error::CountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn round_trips_through_writer() {
        let dir = tmp();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        let pixels: Vec<u8> = (0..=255).collect();
        let label_bytes: Vec<u8> = (0..16).map(|i| i % 5).collect();
        write_idx_images(&images, 16, 4, 4, &pixels).unwrap();
        write_idx_labels(&labels, &label_bytes).unwrap();
        let ds = parse_idx(&images, &labels, PixelScaling::Unit).unwrap();
        assert_eq!(ds.len(), 16);
        assert_eq!(ds.dim(), 16);
        for (i, &b) in pixels.iter().enumerate() {
            assert_eq!(ds.inputs.data()[i], b as f64 / 255.0);
        }
        assert_eq!(
            ds.labels,
            label_bytes.iter().map(|&b| b as usize).collect::<Vec<_>>()
        );
    }
}
