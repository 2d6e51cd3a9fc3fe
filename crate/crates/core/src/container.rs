//! Binary container for named matrices.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "MRBUNDLE"
//! version  u32      1
//! count    u32      number of entries
//! entry*   count times:
//!   name_len u32
//!   name     name_len bytes of UTF-8
//!   rows     u64
//!   cols     u64
//!   payload  rows*cols f64, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const MAGIC: &[u8; 8] = b"MRBUNDLE";
pub const VERSION: u32 = 1;

/// Ordered list of named matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixBundle {
    entries: Vec<(String, DenseMatrix)>,
}

impl MatrixBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, matrix: DenseMatrix) -> &mut Self {
        self.entries.push((name.into(), matrix));
        self
    }

    pub fn with(mut self, name: impl Into<String>, matrix: DenseMatrix) -> Self {
        self.push(name, matrix);
        self
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn entries(&self) -> &[(String, DenseMatrix)] {
        &self.entries
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self.entries.iter().map(|(n, m)| 20 + n.len() + 8 * m.as_slice().len()).sum();
        let mut out = Vec::with_capacity(16 + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, m) in &self.entries {
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

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let count = cur.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(len)?).map_err(|e| e.to_string())?.to_owned();
            let rows = cur.u64()? as usize;
            let cols = cur.u64()? as usize;
            let n = rows.checked_mul(cols).ok_or("matrix size overflows")?;
            let raw = cur.take(n.checked_mul(8).ok_or("matrix size overflows")?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            entries.push((name, DenseMatrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?));
        }
        if cur.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes).map_err(|reason| Error::Format { path: path.to_owned(), reason })
    }

    /// Fetches a required entry, reporting `path` on failure.
    pub fn require(&self, name: &str, path: &Path) -> Result<&DenseMatrix> {
        self.get(name).ok_or_else(|| Error::Format {
            path: path.to_owned(),
            reason: format!("missing entry {name:?}"),
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("unexpected end of file")?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let bundle = MatrixBundle::new().with("a", DenseMatrix::from_rows(&[[1.5]]));
        let bytes = bundle.encode();
        assert_eq!(&bytes[..8], b"MRBUNDLE");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[1, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[1, 0, 0, 0]);
        assert_eq!(bytes[20], b'a');
        assert_eq!(&bytes[21..29], &1u64.to_le_bytes());
        assert_eq!(&bytes[37..45], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 45);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let bytes = MatrixBundle::new().with("m", DenseMatrix::identity(3)).encode();
        assert!(MatrixBundle::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(MatrixBundle::decode(&extra).is_err());
        assert!(MatrixBundle::decode(b"NOTABUNDLE000000").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>(), name in "[a-z_]{0,12}") {
            let mut rng = crate::linalg::SeededRng::new(seed, 0);
            let m = DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal());
            let bundle = MatrixBundle::new().with(name, m).with("second", DenseMatrix::identity(2));
            prop_assert_eq!(MatrixBundle::decode(&bundle.encode()).unwrap(), bundle);
        }
    }
}
