//! Named-tensor archive shared by influence embeddings, word vectors and
//! model checkpoints.
//!
//! Layout: a UTF-8 text header followed by a binary payload.
//!
//! ```text
//! ntar 1
//! <tensor count>
//! <name> <dim0,dim1,...> <dtype> <byte offset into payload>
//! ...
//! <payload: row-major little-endian values, tensors back to back>
//! ```
//!
//! `dtype` is one of `f32`, `f64`, `u32`.
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "ntar";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
            TensorData::U32(_) => "u32",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn byte_len(&self) -> usize {
        match self {
            TensorData::F64(v) => v.len() * 8,
            _ => self.len() * 4,
        }
    }

    /// Values widened to f64. Integer tensors convert exactly.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: TensorData) -> Self {
        NamedTensor {
            name: name.into(),
            shape,
            data,
        }
    }
}

/// An ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    pub tensors: Vec<NamedTensor>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: NamedTensor) {
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = format!("{MAGIC} {VERSION}\n{}\n", self.tensors.len());
        let mut offset = 0usize;
        for t in &self.tensors {
            if t.name.is_empty() || t.name.chars().any(char::is_whitespace) {
                return Err(Error::Archive(format!("invalid tensor name {:?}", t.name)));
            }
            if t.shape.is_empty() || t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Archive(format!(
                    "tensor {} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            header.push_str(&format!("{} {} {} {}\n", t.name, dims.join(","), t.data.dtype(), offset));
            offset += t.data.byte_len();
        }
        let mut out = header.into_bytes();
        out.reserve(offset);
        for t in &self.tensors {
            t.data.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Archive("truncated header".into()))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| Error::Archive("header is not UTF-8".into()))
        };
        let magic = next_line()?;
        let version = magic
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Archive(format!("bad magic line {magic:?}")))?;
        if version != VERSION.to_string() {
            return Err(Error::Archive(format!("unsupported format version {version}")));
        }
        let count: usize = next_line()?
            .trim()
            .parse()
            .map_err(|_| Error::Archive("bad tensor count".into()))?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next_line()?;
            let fields: Vec<&str> = line.split(' ').collect();
            let [name, dims, dtype, offset] = fields[..] else {
                return Err(Error::Archive(format!("bad header entry {line:?}")));
            };
            let shape = dims
                .split(',')
                .map(str::parse::<usize>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Archive(format!("bad shape in {line:?}")))?;
            let offset: usize = offset
                .parse()
                .map_err(|_| Error::Archive(format!("bad offset in {line:?}")))?;
            entries.push((name.to_string(), shape, dtype.to_string(), offset));
        }
        let payload = &bytes[pos..];
        let mut tensors = Vec::with_capacity(count);
        for (name, shape, dtype, offset) in entries {
            let n: usize = shape.iter().product();
            let width = match dtype.as_str() {
                "f64" => 8,
                "f32" | "u32" => 4,
                other => return Err(Error::Archive(format!("unknown dtype {other} for {name}"))),
            };
            let end = offset
                .checked_add(n * width)
                .filter(|&e| e <= payload.len())
                .ok_or_else(|| Error::Archive(format!("payload of {name} is truncated")))?;
            let raw = &payload[offset..end];
            let data = match dtype.as_str() {
                "f64" => TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                "f32" => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                _ => TensorData::U32(
                    raw.chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
            };
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(TensorArchive { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
