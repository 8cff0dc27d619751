//! IDX (MNIST container) parsing: big-endian u32 magic and dimension sizes,
//! then raw unsigned bytes.

use crate::data::Dataset;
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Loads an image/label file pair into a [`Dataset`]. Pixel bytes are scaled
/// to `[0,1]` by dividing by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n_images, height, width, pixels) = parse_images(&image_bytes)?;
    let labels = parse_labels(&label_bytes)?;
    if n_images != labels.len() {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: labels.len(),
        });
    }
    for &label in &labels {
        if label >= 10 {
            return Err(Error::LabelOutOfRange {
                label: label as usize,
                classes: 10,
            });
        }
    }
    let images = pixels.iter().map(|&b| b as f32 / 255.0).collect();
    Dataset::from_raw(images, labels, height, width)
}

fn read_u32_be(bytes: &[u8], pos: usize, what: &'static str) -> Result<u32> {
    if pos + 4 > bytes.len() {
        return Err(Error::Truncated {
            format: "idx",
            detail: format!("{} header field at offset {}", what, pos),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[pos],
        bytes[pos + 1],
        bytes[pos + 2],
        bytes[pos + 3],
    ]))
}

fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32_be(bytes, 0, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            format: "idx image file",
            expected: IMAGES_MAGIC.to_string(),
            got: magic.to_string(),
        });
    }
    let n = read_u32_be(bytes, 4, "image count")? as usize;
    let h = read_u32_be(bytes, 8, "image rows")? as usize;
    let w = read_u32_be(bytes, 12, "image cols")? as usize;
    let expected = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or(Error::Corrupt {
            format: "idx",
            detail: "image payload size overflows".into(),
        })?;
    let payload = &bytes[16.min(bytes.len())..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            format: "idx",
            detail: format!(
                "image payload holds {} bytes, header promises {}",
                payload.len(),
                expected
            ),
        });
    }
    Ok((n, h, w, payload))
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0, "label magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            format: "idx label file",
            expected: LABELS_MAGIC.to_string(),
            got: magic.to_string(),
        });
    }
    let n = read_u32_be(bytes, 4, "label count")? as usize;
    let payload = &bytes[8.min(bytes.len())..];
    if payload.len() != n {
        return Err(Error::Truncated {
            format: "idx",
            detail: format!(
                "label payload holds {} bytes, header promises {}",
                payload.len(),
                n
            ),
        });
    }
    Ok(payload.to_vec())
}

/// Serializes images (pixel bytes) and labels back into the IDX byte layout.
/// Used by tests and tooling that need synthetic fixture files.
pub fn encode_idx_images(images: &[u8], n: usize, h: usize, w: usize) -> Vec<u8> {
    assert_eq!(images.len(), n * h * w);
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(h as u32).to_be_bytes());
    out.extend_from_slice(&(w as u32).to_be_bytes());
    out.extend_from_slice(images);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
