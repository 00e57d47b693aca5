//! The ECTF named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"ECTF"  version:u32 (=1)  count:u32
//! count × { name_len:u32  name:utf8  h:u32  w:u32  c:u32  data: h*w*c × f32 }
//! ```
//!
//! Tensor data is row-major `(row, col, channel)`, matching [`Tensor3`].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor3;

pub const MAGIC: &[u8; 4] = b"ECTF";
pub const VERSION: u32 = 1;

/// An ordered list of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub entries: Vec<(String, Tensor3)>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor3) {
        self.entries.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor3> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            for dim in [t.height(), t.width(), t.channels()] {
                w.write_all(&(dim as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.data().len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "ECTF",
            detail,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| bad(format!("header: {e}")))?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r).map_err(|e| bad(format!("version: {e}")))?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r).map_err(|e| bad(format!("count: {e}")))?;
        let mut entries = Vec::new();
        for i in 0..count {
            let name_len =
                read_u32(&mut r).map_err(|e| bad(format!("entry {i} name length: {e}")))?;
            let mut name = vec![0u8; name_len as usize];
            r.read_exact(&mut name)
                .map_err(|e| bad(format!("entry {i} name: {e}")))?;
            let name = String::from_utf8(name).map_err(|e| bad(format!("entry {i} name: {e}")))?;
            let mut dims = [0usize; 3];
            for d in &mut dims {
                *d = read_u32(&mut r).map_err(|e| bad(format!("entry '{name}' dims: {e}")))?
                    as usize;
            }
            let n = dims[0]
                .checked_mul(dims[1])
                .and_then(|v| v.checked_mul(dims[2]))
                .ok_or_else(|| bad(format!("entry '{name}' dims overflow")))?;
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)
                .map_err(|e| bad(format!("entry '{name}' data: {e}")))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor3::new(dims[0], dims[1], dims[2], data)
                .map_err(|e| bad(format!("entry '{name}': {e}")))?;
            entries.push((name, t));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).unwrap_or(0) != 0 {
            return Err(bad("trailing bytes after last entry".into()));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).at(parent)?;
        }
        fs::write(path, self.to_bytes()).at(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).at(path)?;
        Self::from_bytes(&bytes)
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let mut f = TensorFile::new();
        f.push("ab", Tensor3::new(1, 1, 2, vec![1.0, -2.5]).unwrap());
        let bytes = f.to_bytes();
        let mut expect = b"ECTF".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u32.to_le_bytes());
        expect.extend(b"ab");
        for d in [1u32, 1, 2] {
            expect.extend(d.to_le_bytes());
        }
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expect);
        assert_eq!(TensorFile::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn rejects_corruption() {
        let mut f = TensorFile::new();
        f.push("x", Tensor3::zeros(2, 2, 2));
        let bytes = f.to_bytes();
        assert!(TensorFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TensorFile::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(TensorFile::from_bytes(&extra).is_err());
    }
}
