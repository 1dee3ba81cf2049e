//! Binary feature tensor files.
//!
//! Layout (little-endian):
//! - magic `b"MMSS"` (4 bytes)
//! - version: u8 = 1
//! - dtype: u8 (0 = float32)
//! - ndim: u8
//! - dims: ndim × u32
//! - payload: product(dims) × f32, row-major
//!
//! Trailing bytes after the payload are rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"MMSS";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn encode(tensor: &Tensor) -> Result<Vec<u8>> {
    if tensor.rank() > u8::MAX as usize {
        return Err(Error::contract("tensor rank does not fit in a u8"));
    }
    let mut out = Vec::with_capacity(7 + 4 * tensor.rank() + 4 * tensor.numel());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(tensor.rank() as u8);
    for &d in tensor.dims() {
        let d = u32::try_from(d).map_err(|_| Error::contract(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses a feature file image; `origin` only labels error messages.
pub fn decode(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let err = |msg: String| Error::load(origin, msg);
    if bytes.len() < 7 {
        return Err(err(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(err("bad magic, expected \"MMSS\"".into()));
    }
    if bytes[4] != VERSION {
        return Err(err(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(err(format!("unsupported dtype {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    if ndim == 0 {
        return Err(err("zero-dimensional tensor".into()));
    }
    let header = 7 + 4 * ndim;
    if bytes.len() < header {
        return Err(err("truncated dims header".into()));
    }
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(err(format!("zero extent in dims {dims:?}")));
    }
    let numel = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err(format!("dims {dims:?} overflow")))?;
    let expected = numel
        .checked_mul(4)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| err(format!("dims {dims:?} overflow")))?;
    if bytes.len() < expected {
        return Err(err(format!(
            "payload truncated: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(err(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(dims, data)
}

pub fn read_tensor_file(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_tensor_file(path: &Path, tensor: &Tensor) -> Result<()> {
    let bytes = encode(tensor)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
