//! IDX (big-endian) image/label ingestion.

use std::fs;
use std::path::Path;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// Magic number of an unsigned-byte rank-3 IDX file (images).
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic number of an unsigned-byte rank-1 IDX file (labels).
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::TruncatedIdx {
            path: path.display().to_string(),
            needed: end,
            have: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse an IDX image file and its companion label file into a dataset.
///
/// Pixel bytes are scaled by 1/255; per-sample shape is `[height, width]`.
/// The class count is the highest label plus one.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes =
        fs::read(images_path).map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let label_bytes =
        fs::read(labels_path).map_err(|e| Error::io(labels_path.display().to_string(), e))?;

    let magic = read_u32_be(&image_bytes, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.display().to_string(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_u32_be(&image_bytes, 4, images_path)? as usize;
    let h = read_u32_be(&image_bytes, 8, images_path)? as usize;
    let w = read_u32_be(&image_bytes, 12, images_path)? as usize;
    let needed = 16 + n * h * w;
    if image_bytes.len() < needed {
        return Err(Error::TruncatedIdx {
            path: images_path.display().to_string(),
            needed,
            have: image_bytes.len(),
        });
    }

    let label_magic = read_u32_be(&label_bytes, 0, labels_path)?;
    if label_magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.display().to_string(),
            expected: LABELS_MAGIC,
            found: label_magic,
        });
    }
    let label_n = read_u32_be(&label_bytes, 4, labels_path)? as usize;
    if label_n != n {
        return Err(Error::InvalidDataset(format!(
            "{n} images but {label_n} labels"
        )));
    }
    let labels_needed = 8 + n;
    if label_bytes.len() < labels_needed {
        return Err(Error::TruncatedIdx {
            path: labels_path.display().to_string(),
            needed: labels_needed,
            have: label_bytes.len(),
        });
    }

    let features: Vec<f32> = image_bytes[16..needed]
        .iter()
        .map(|&b| f32::from(b) / 255.0)
        .collect();
    let labels: Vec<usize> = label_bytes[8..labels_needed]
        .iter()
        .map(|&b| b as usize)
        .collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Tensor::new(vec![n, h, w], features)?, labels, num_classes)
}

/// Write a dataset with `[h, w]`-shaped samples as an IDX image/label file
/// pair. Feature values are quantized back to bytes (round of `v * 255`).
pub fn write_idx(
    data: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let [h, w] = *data.sample_shape() else {
        return Err(Error::InvalidDataset(format!(
            "IDX export needs [h, w] samples, got {:?}",
            data.sample_shape()
        )));
    };
    let n = data.len();

    let mut image_bytes = Vec::with_capacity(16 + n * h * w);
    image_bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(n as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(h as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(w as u32).to_be_bytes());
    for v in data.features().data() {
        image_bytes.push((v * 255.0).round() as u8);
    }

    let mut label_bytes = Vec::with_capacity(8 + n);
    label_bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(n as u32).to_be_bytes());
    for &l in data.labels() {
        label_bytes.push(l as u8);
    }

    fs::write(images_path, image_bytes)
        .map_err(|e| Error::io(images_path.display().to_string(), e))?;
    fs::write(labels_path, label_bytes)
        .map_err(|e| Error::io(labels_path.display().to_string(), e))
}
