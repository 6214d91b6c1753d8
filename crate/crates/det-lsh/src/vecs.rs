//! `.fvecs`, `.bvecs` and `.ivecs` files: each record is a little-endian
//! `i32` dimension followed by that many `f32`, `u8` or `i32` elements.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use det_lsh_core::Dataset;

use crate::error::{io_error, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Float32,
    Uint8,
    Int32,
}

impl ElementKind {
    pub fn width(self) -> usize {
        match self {
            ElementKind::Uint8 => 1,
            ElementKind::Float32 | ElementKind::Int32 => 4,
        }
    }

    /// Kind implied by a file extension (`fvecs`, `bvecs`, `ivecs`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(ElementKind::Float32),
            "bvecs" => Some(ElementKind::Uint8),
            "ivecs" => Some(ElementKind::Int32),
            _ => None,
        }
    }
}

/// Row-major records of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecords<T> {
    pub dim: usize,
    pub values: Vec<T>,
}

impl<T> VectorRecords<T> {
    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

fn decode<T>(bytes: &[u8], width: usize, mut element: impl FnMut(&[u8]) -> T) -> Result<VectorRecords<T>> {
    let mut dim: Option<usize> = None;
    let mut values = Vec::new();
    let mut at = 0;
    let mut record = 0usize;
    while at < bytes.len() {
        let Some(header) = bytes.get(at..at + 4) else {
            return Err(HarnessError::Format(format!("record {record}: partial dimension header")));
        };
        let d = i32::from_le_bytes(header.try_into().unwrap());
        if d <= 0 {
            return Err(HarnessError::Format(format!("record {record}: non-positive dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(HarnessError::Format(format!("record {record}: dimension {d} differs from {expected}")))
            }
            Some(_) => {}
        }
        at += 4;
        let body = bytes
            .get(at..at + d * width)
            .ok_or_else(|| HarnessError::Format(format!("record {record}: trailing partial record")))?;
        values.extend(body.chunks_exact(width).map(&mut element));
        at += d * width;
        record += 1;
    }
    Ok(VectorRecords { dim: dim.unwrap_or(0), values })
}

pub fn decode_fvecs(bytes: &[u8]) -> Result<VectorRecords<f32>> {
    decode(bytes, 4, |b| f32::from_le_bytes(b.try_into().unwrap()))
}

pub fn decode_bvecs(bytes: &[u8]) -> Result<VectorRecords<u8>> {
    decode(bytes, 1, |b| b[0])
}

pub fn decode_ivecs(bytes: &[u8]) -> Result<VectorRecords<i32>> {
    decode(bytes, 4, |b| i32::from_le_bytes(b.try_into().unwrap()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_error(path))
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorRecords<f32>> {
    decode_fvecs(&read_bytes(path.as_ref())?)
}

pub fn read_bvecs(path: impl AsRef<Path>) -> Result<VectorRecords<u8>> {
    decode_bvecs(&read_bytes(path.as_ref())?)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<VectorRecords<i32>> {
    decode_ivecs(&read_bytes(path.as_ref())?)
}

/// Reads an `.fvecs` or `.bvecs` file (chosen by extension, default
/// `.fvecs`) as a float dataset.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let records = match ElementKind::from_path(path) {
        Some(ElementKind::Uint8) => {
            let b = read_bvecs(path)?;
            VectorRecords { dim: b.dim, values: b.values.into_iter().map(f32::from).collect() }
        }
        Some(ElementKind::Int32) => {
            return Err(HarnessError::Format(format!("{}: ivecs files hold ids, not vectors", path.display())))
        }
        _ => read_fvecs(path)?,
    };
    if records.is_empty() {
        return Err(HarnessError::Format(format!("{}: no vectors", path.display())));
    }
    Ok(Dataset::new(records.dim, records.values)?)
}

fn encode<T: Copy>(dim: usize, values: &[T], width: usize, mut put: impl FnMut(T, &mut Vec<u8>)) -> Result<Vec<u8>> {
    if dim == 0 || !values.len().is_multiple_of(dim) || dim > i32::MAX as usize {
        return Err(HarnessError::InvalidArgument(format!("{} values do not form rows of {dim}", values.len())));
    }
    let mut out = Vec::with_capacity(values.len() / dim * (4 + dim * width));
    for row in values.chunks_exact(dim) {
        out.extend_from_slice(&(dim as i32).to_le_bytes());
        for &v in row {
            put(v, &mut out);
        }
    }
    Ok(out)
}

pub fn encode_fvecs(dim: usize, values: &[f32]) -> Result<Vec<u8>> {
    encode(dim, values, 4, |v, out| out.extend_from_slice(&v.to_le_bytes()))
}

pub fn encode_bvecs(dim: usize, values: &[u8]) -> Result<Vec<u8>> {
    encode(dim, values, 1, |v, out| out.push(v))
}

pub fn encode_ivecs(dim: usize, values: &[i32]) -> Result<Vec<u8>> {
    encode(dim, values, 4, |v, out| out.extend_from_slice(&v.to_le_bytes()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(io_error(path))
}

pub fn write_fvecs(path: impl AsRef<Path>, dim: usize, values: &[f32]) -> Result<()> {
    write_bytes(path.as_ref(), &encode_fvecs(dim, values)?)
}

pub fn write_bvecs(path: impl AsRef<Path>, dim: usize, values: &[u8]) -> Result<()> {
    write_bytes(path.as_ref(), &encode_bvecs(dim, values)?)
}

pub fn write_ivecs(path: impl AsRef<Path>, dim: usize, values: &[i32]) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ivecs(dim, values)?)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_fvecs(path, data.dim(), data.as_slice())
}
