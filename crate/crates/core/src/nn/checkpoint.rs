//! Tensor container file with a text metadata block.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     4 bytes  "DNCK"
//! version   u32      1
//! meta_len  u64
//! meta      meta_len bytes of UTF-8
//! count     u64      number of tensors
//! tensors   count x [name_len u32, name, ndim u32, dims u64 x ndim, values f64 x prod(dims)]
//! crc32     u32      over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DNCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self {
            metadata: metadata.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        let copy = Tensor::new(tensor.shape().to_vec(), tensor.values().to_vec()).expect("shape already valid");
        self.tensors.push((name.into(), copy));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::InvalidState(format!("checkpoint lacks tensor {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.metadata.len() as u64).to_le_bytes());
        buf.extend_from_slice(self.metadata.as_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + 4 {
            return Err(Error::format(
                0,
                format!("checkpoint truncated to {} bytes", bytes.len()),
            ));
        }
        let body_len = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
        if &bytes[..4] != MAGIC {
            return Err(Error::format(0, "bad checkpoint magic"));
        }
        let actual = crc32fast::hash(&bytes[..body_len]);
        if stored != actual {
            return Err(Error::format(
                body_len as u64,
                format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
            ));
        }
        let mut r = Reader {
            bytes: &bytes[..body_len],
            pos: 4,
        };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u64()? as usize;
        let metadata =
            String::from_utf8(r.take(meta_len)?.to_vec()).map_err(|_| Error::format(16, "metadata is not UTF-8"))?;
        let count = r.u64()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let at = r.pos as u64;
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.ok_or_else(|| Error::format(at, "tensor size overflows"))?;
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::format(at, "tensor size overflows"))?,
            )?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, values)?));
        }
        if r.pos != body_len {
            return Err(Error::format(r.pos as u64, "trailing bytes after tensors"));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.pos as u64,
                    format!("need {n} bytes, {} remain", self.bytes.len() - self.pos),
                )
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
