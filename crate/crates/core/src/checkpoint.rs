//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..8   magic "SIMCKPT1"
//! u32          format version (1)
//! u32          tensor count
//! per tensor:  u32 rank, rank x u32 extents, product x f32 values
//! ```
//!
//! Tensors are emitted in fixed layer order: conv1 kernels, conv1 bias,
//! conv2 kernels, conv2 bias, then weights and bias of each dense layer.
//! Round-tripping reproduces every parameter bit-exactly on any host.

use crate::error::{Error, Result};
use crate::model::PADDING;
use crate::model::{ModelSpec, Network};
use crate::ops::{ConvParams, DenseParams};
use crate::tensor::Tensor;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SIMCKPT1";
pub const VERSION: u32 = 1;

/// Serializes the network into the checkpoint byte layout.
pub fn checkpoint_bytes(net: &Network<f32>) -> Vec<u8> {
    let tensors = net.param_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &dim in t.shape() {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// SHA-256 of the checkpoint byte stream, as lowercase hex.
pub fn model_digest(net: &Network<f32>) -> String {
    digest_bytes(&checkpoint_bytes(net))
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in hash {
        s.push_str(&format!("{:02x}", b));
    }
    s
}

/// Writes the checkpoint atomically (temp file in the same directory, then
/// rename), so a crash can never leave a truncated file behind.
pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(net);
    write_atomic(path, &bytes)
}

/// Atomic write used for every produced file: temp file in the target
/// directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument {
            what: "output path",
            detail: format!("{} has no file name", path.display()),
        })?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!("{}.tmp", file_name));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads and validates a checkpoint against `spec`.
pub fn load_checkpoint(path: &Path, spec: ModelSpec) -> Result<Network<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    network_from_bytes(&bytes, spec)
}

/// Decodes a checkpoint byte stream and validates it against `spec`.
pub fn network_from_bytes(bytes: &[u8], spec: ModelSpec) -> Result<Network<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            format: "checkpoint",
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            got: format!("{:02x?}", magic),
        });
    }
    let version = r.read_u32()?;
    if version != VERSION {
        return Err(Error::BadVersion { got: version });
    }
    let count = r.read_u32()? as usize;
    if count != 10 {
        return Err(Error::Corrupt {
            format: "checkpoint",
            detail: format!("expected 10 tensors, found {}", count),
        });
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        tensors.push(r.read_tensor()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt {
            format: "checkpoint",
            detail: format!("{} trailing bytes after last tensor", bytes.len() - r.pos),
        });
    }
    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count checked above");
    let conv1 = ConvParams::new(next(), next(), PADDING)?;
    let conv2 = ConvParams::new(next(), next(), PADDING)?;
    let fc1 = DenseParams::new(next(), next())?;
    let fc2 = DenseParams::new(next(), next())?;
    let fc3 = DenseParams::new(next(), next())?;
    Network::from_parts(spec, conv1, conv2, fc1, fc2, fc3)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                format: "checkpoint",
                detail: format!(
                    "needed {} bytes at offset {}, file has {}",
                    n,
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn read_tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.read_u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Corrupt {
                format: "checkpoint",
                detail: format!("implausible tensor rank {}", rank),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let dim = self.read_u32()? as usize;
            len = len.checked_mul(dim).ok_or(Error::Corrupt {
                format: "checkpoint",
                detail: "tensor volume overflows".into(),
            })?;
            shape.push(dim);
        }
        // Bounds the allocation by what the file can actually hold.
        if self.pos + len.saturating_mul(4) > self.bytes.len() {
            return Err(Error::Truncated {
                format: "checkpoint",
                detail: format!("tensor {:?} data extends past end of file", shape),
            });
        }
        let raw = self.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(&shape, data)
    }
}
