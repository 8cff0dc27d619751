//! Binary PGM (P5, maxval 255) reading and writing.

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

/// Grayscale image with row-major pixels in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    /// Pixels are clamped into `[0,1]`; the count must match the dimensions.
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                what: "gray image pixel count",
                expected: format!("{}x{} = {}", width, height, width * height),
                got: pixels.len().to_string(),
            });
        }
        let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }
}

/// Reads a binary (P5) PGM file with maxval 255.
pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::BadMagic {
            format: "pgm",
            expected: "P5".into(),
            got: format!("{:?}", &bytes[..bytes.len().min(2)]),
        });
    }
    let mut pos = 2;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Corrupt {
            format: "pgm",
            detail: format!("maxval {} unsupported, expected 255", maxval),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Corrupt {
            format: "pgm",
            detail: "missing whitespace after maxval".into(),
        });
    }
    pos += 1;
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            format: "pgm",
            detail: format!(
                "raster holds {} bytes, header promises {}",
                payload.len(),
                expected
            ),
        });
    }
    let pixels = payload[..expected]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Skips whitespace and `#` comments, then parses one decimal integer.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Corrupt {
            format: "pgm",
            detail: format!("expected integer at offset {}", start),
        });
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::Corrupt {
            format: "pgm",
            detail: "unparseable header integer".into(),
        })
}

/// Encodes `[0,1]` values as a P5 raster, clamping then rounding to 0..255.
pub fn encode_pgm(values: &[f32], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend(
        values
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Writes a P5 file atomically.
pub fn save_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_pgm(&image.pixels, image.width, image.height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn write_then_read_is_quantization_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let pixels: Vec<f32> = (0..12).map(|i| i as f32 / 11.0).collect();
        let img = GrayImage::new(4, 3, pixels.clone()).unwrap();
        save_pgm(&img, &path).unwrap();
        let back = load_pgm(&path).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.height(), 3);
        for (a, b) in back.pixels().iter().zip(&pixels) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn all_black_round_trips_to_zeros() {
        let img = GrayImage::new(5, 2, vec![0.0; 10]).unwrap();
        let decoded = decode_pgm(&encode_pgm(img.pixels(), 5, 2)).unwrap();
        assert!(decoded.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixture_bytes_scale_exactly() {
        // 3x2 raster with bytes 0,51,102,153,204,255 -> multiples of 0.2.
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        let img = decode_pgm(&bytes).unwrap();
        let want = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        for (a, b) in img.pixels().iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 250]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 1);
    }

    #[test]
    fn rejects_bad_magic_maxval_and_short_raster() {
        assert!(matches!(
            decode_pgm(b"P6\n1 1\n255\n0"),
            Err(Error::BadMagic { .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\x00\x00"),
            Err(Error::Corrupt { .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\x01\x02"),
            Err(Error::Truncated { .. })
        ));
    }
}
