//! Flat binary checkpoint format.
//!
//! ```text
//! "DAHG1"                          5 magic bytes
//! repeated until end of file:
//!   name_len   u32 little-endian
//!   name       name_len bytes, UTF-8
//!   rows       u64 little-endian
//!   cols       u64 little-endian
//!   values     rows*cols f64 little-endian, row-major
//! ```
//!
//! Tensors are written in [`DaHgnnParams::named_tensors`] order. Loading
//! checks the names, so a truncated or reordered file is rejected.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::params::DaHgnnParams;
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 5] = b"DAHG1";

pub fn encode(params: &DaHgnnParams) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for (name, m) in params.named_tensors() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Cursor<'b> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'b [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// All `(name, tensor)` records of a checkpoint, in file order.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Matrix)>> {
    if !bytes.starts_with(MAGIC) {
        return Err(Error::Checkpoint("missing DAHG1 magic".into()));
    }
    let mut cur = Cursor { buf: bytes, pos: MAGIC.len() };
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = cur.u64("rows")? as usize;
        let cols = cur.u64("cols")? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some())
            .ok_or_else(|| Error::Checkpoint(format!("{name}: absurd shape {rows}x{cols}")))?;
        let raw = cur.take(count * 8, &name)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Matrix::new(rows, cols, values)?));
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<DaHgnnParams> {
    let tensors = decode_tensors(bytes)?;
    let heads = tensors
        .iter()
        .filter(|(n, _)| n.starts_with("layer1.") && n.ends_with(".w"))
        .count();
    let expected: Vec<String> = {
        let mut v = vec!["conv.theta".to_string()];
        for s in 0..heads {
            for t in ["w", "alpha_x", "alpha_e"] {
                v.push(format!("layer1.head{s}.{t}"));
            }
        }
        for t in ["w", "alpha_x", "alpha_e"] {
            v.push(format!("layer2.{t}"));
        }
        v
    };
    let names: Vec<&str> = tensors.iter().map(|(n, _)| n.as_str()).collect();
    if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Checkpoint(format!(
            "unexpected tensor layout {names:?}"
        )));
    }
    DaHgnnParams::from_tensors(tensors.into_iter().map(|(_, m)| m).collect(), heads)
}

pub fn save(params: &DaHgnnParams, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<DaHgnnParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::params::ModelShape;

    fn params() -> DaHgnnParams {
        DaHgnnParams::init(
            ModelShape {
                input_dim: 5,
                hidden_dim: 4,
                attn_dim: 3,
                heads: 2,
                classes: 3,
            },
            42,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let p = params();
        assert_eq!(decode(&encode(&p)).unwrap(), p);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&params());
        assert_eq!(&bytes[..5], b"DAHG1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 10);
        assert_eq!(&bytes[9..19], b"conv.theta");
        assert_eq!(u64::from_le_bytes(bytes[19..27].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[27..35].try_into().unwrap()), 4);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = encode(&params());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(b"NOPE!").is_err());
        let mut swapped = bytes.clone();
        swapped[9] = b'k';
        assert!(decode(&swapped).is_err());
    }
}
