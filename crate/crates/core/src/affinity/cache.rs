//! Binary margin-table cache.
//!
//! Layout, all little-endian:
//!
//! ```text
//! 0..8    magic  b"TIMARGIN"
//! 8..12   u32    format version
//! 12..20  u64    N
//! 20..    f64    N·N entries, row-major
//! ```

use std::fs;
use std::path::Path;

use super::PriorMarginTable;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const MARGIN_CACHE_MAGIC: &[u8; 8] = b"TIMARGIN";
pub const MARGIN_CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_margin_cache(table: &PriorMarginTable) -> Vec<u8> {
    let n = table.n();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * n);
    out.extend_from_slice(MARGIN_CACHE_MAGIC);
    out.extend_from_slice(&MARGIN_CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in table.matrix().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_margin_cache(bytes: &[u8], path: &Path) -> Result<PriorMarginTable> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MARGIN_CACHE_MAGIC {
        return Err(bad("not a margin cache (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MARGIN_CACHE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let expected = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| bad(format!("absurd table size {n}")))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for N = {n}, found {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    PriorMarginTable::new(Matrix::from_vec(n, n, values)?)
}

pub fn write_margin_cache(path: &Path, table: &PriorMarginTable) -> Result<()> {
    fs::write(path, encode_margin_cache(table)).map_err(|e| Error::io(path, e))
}

pub fn read_margin_cache(path: &Path) -> Result<PriorMarginTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_margin_cache(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PriorMarginTable {
        PriorMarginTable::new(
            Matrix::from_rows(&[vec![0.0, 0.25, 1.0 / 3.0], vec![0.5, 0.0, 0.1], vec![0.2, 0.7, 0.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_margin_cache(&table());
        assert_eq!(&bytes[..8], b"TIMARGIN");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 9 * 8);
        assert_eq!(&bytes[28..36], &0.25f64.to_le_bytes());
    }

    #[test]
    fn round_trip_and_corruption() {
        let t = table();
        let bytes = encode_margin_cache(&t);
        let p = Path::new("x");
        assert_eq!(decode_margin_cache(&bytes, p).unwrap(), t);
        assert!(decode_margin_cache(&bytes[..bytes.len() - 1], p).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 2;
        assert!(decode_margin_cache(&wrong, p).is_err());
        wrong = bytes;
        wrong[0] = b'X';
        assert!(decode_margin_cache(&wrong, p).is_err());
    }
}
