//! Little-endian float32 array files: magic `SGEM`, a `u32` rank, one `u64`
//! per dimension, then the values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SGEM";

pub fn encode_array(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::Shape(format!("array of {} values for shape {shape:?}", data.len())));
    }
    let mut out = Vec::with_capacity(8 + 8 * shape.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_array(bytes: &[u8], origin: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", origin.display()));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing array header"));
    }
    let ndim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated shape"));
    }
    let shape: Vec<usize> = (0..ndim)
        .map(|i| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes")) as usize)
        .collect();
    let count: usize = shape.iter().product();
    if bytes.len() != header + 4 * count {
        return Err(bad("data length does not match shape"));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((shape, data))
}

pub fn write_array(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    std::fs::write(path, encode_array(shape, data)?).map_err(|e| Error::io(path, e))
}

pub fn read_array(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_array(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let bytes = encode_array(&[2, 1], &[1.5, -2.0]).unwrap();
        assert_eq!(&bytes[..4], b"SGEM");
        assert_eq!(bytes[4..8], 2u32.to_le_bytes());
        assert_eq!(bytes[8..16], 2u64.to_le_bytes());
        assert_eq!(bytes[16..24], 1u64.to_le_bytes());
        assert_eq!(bytes[24..28], 1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 32);
        let (shape, data) = decode_array(&bytes, Path::new("x")).unwrap();
        assert_eq!(shape, vec![2, 1]);
        assert_eq!(data, vec![1.5, -2.0]);
        assert!(decode_array(&bytes[..30], Path::new("x")).is_err());
        assert!(encode_array(&[3], &[1.0]).is_err());
    }
}
