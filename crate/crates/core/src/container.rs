//! Named-tensor binary container used for feature caches and checkpoints.
//!
//! Layout (little-endian): magic `[u8; 4]` | version u16 | n_meta u32 |
//! n_meta (key, value) strings | n_tensors u32 | per tensor: name string,
//! dtype u8, rank u8, rank x u64 dims, values. Strings are u32 length +
//! UTF-8.

use std::path::Path;

use crate::error::{GeegaError, Result};

pub const CONTAINER_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    U32(Vec<u32>),
}

impl TensorData {
    fn code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::U8(_) => 2,
            TensorData::U32(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::U32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<NamedTensor>,
}

impl Container {
    pub fn new(magic: &[u8; 4]) -> Self {
        Container {
            magic: *magic,
            meta: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| GeegaError::Format(format!("container is missing metadata `{key}`")))
    }

    pub fn push(&mut self, name: &str, dims: Vec<usize>, data: TensorData) -> Result<()> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(GeegaError::Format(format!(
                "tensor {name}: dims {dims:?} do not match {} values",
                data.len()
            )));
        }
        self.tensors.push(NamedTensor {
            name: name.to_string(),
            dims,
            data,
        });
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| GeegaError::Format(format!("container has no tensor `{name}`")))
    }

    pub fn encode(&self) -> Vec<u8> {
        fn put_str(buf: &mut Vec<u8>, s: &str) {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(&self.magic);
        buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut buf, k);
            put_str(&mut buf, v);
        }
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut buf, &t.name);
            buf.push(t.data.code());
            buf.push(t.dims.len() as u8);
            for d in &t.dims {
                buf.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                TensorData::U8(v) => buf.extend_from_slice(v),
                TensorData::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != magic {
            return Err(GeegaError::Format(format!(
                "bad magic bytes, expected {}",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != CONTAINER_VERSION {
            return Err(GeegaError::Format(format!("unsupported container version {version}")));
        }
        let mut c = Container::new(magic);
        let n_meta = u32::from_le_bytes(r.array()?);
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            c.meta.push((k, v));
        }
        let n_tensors = u32::from_le_bytes(r.array()?);
        for _ in 0..n_tensors {
            let name = r.string()?;
            let code = r.take(1)?[0];
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank)
                .map(|_| Ok(u64::from_le_bytes(r.array()?) as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let data = match code {
                0 => TensorData::F32(r.take(n * 4)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
                1 => TensorData::F64(r.take(n * 8)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
                2 => TensorData::U8(r.take(n)?.to_vec()),
                3 => TensorData::U32(r.take(n * 4)?.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect()),
                other => return Err(GeegaError::Format(format!("tensor {name}: unknown dtype {other}"))),
            };
            c.tensors.push(NamedTensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(GeegaError::Format("trailing bytes after last tensor".into()));
        }
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path, magic: &[u8; 4]) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| GeegaError::Ingest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Container::decode(&bytes, magic).map_err(|e| GeegaError::Ingest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| GeegaError::Format("truncated container".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn string(&mut self) -> Result<String> {
        let n = u32::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| GeegaError::Format("string is not UTF-8".into()))
    }
}
