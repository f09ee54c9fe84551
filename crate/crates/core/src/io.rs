//! Binary matrix/vector files.
//!
//! Layout: the magic bytes `KIGN`, a `u32` format version, a `u32` rank, one
//! `u32` per dimension, then the values as little-endian `f64` in row-major
//! order. All integers are little-endian. Round trips are bit-exact.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::{ShapeError, Tensor};

pub const MAGIC: &[u8; 4] = b"KIGN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("corrupt header: {0}")]
    Header(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_f64s(w: &mut impl Write, values: &[f64]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn dim_to_u32(d: usize) -> io::Result<u32> {
    u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> io::Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, dim_to_u32(t.shape().len())?)?;
    for &d in t.shape() {
        write_u32(w, dim_to_u32(d)?)?;
    }
    write_f64s(w, t.data())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor, FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::Magic(magic));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let rank = read_u32(r)? as usize;
    if rank > 8 {
        return Err(FormatError::Header(format!("rank {rank} is implausible")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<io::Result<Vec<_>>>()?;
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::Header("shape overflows".into()))?;
    let data = read_f64s(r, n)?;
    Ok(Tensor::from_vec(&shape, data)?)
}

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * t.shape().len() + 8 * t.len());
    write_tensor(&mut buf, t).expect("writing to a Vec cannot fail");
    buf
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let mut cursor = bytes;
    let t = read_tensor(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(FormatError::Trailing(cursor.len()));
    }
    Ok(t)
}

pub fn save_tensor(path: &Path, t: &Tensor) -> io::Result<()> {
    write_atomic(path, &tensor_to_bytes(t))
}

pub fn load_tensor(path: &Path) -> Result<Tensor, FormatError> {
    tensor_from_bytes(&fs::read(path)?)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
