//! Tensor file format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BTEN"
//! 4       2     version (u16, currently 1)
//! 6       2     rank (u16, always 4)
//! 8       16    dims: batch, height, width, channels (u32 each)
//! 24      4*N   values, f32
//! ```
//!
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"BTEN";
pub const TENSOR_VERSION: u16 = 1;
pub const TENSOR_HEADER_LEN: usize = 24;

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    let mut header = Vec::with_capacity(TENSOR_HEADER_LEN);
    header.extend_from_slice(TENSOR_MAGIC);
    header.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    header.extend_from_slice(&4u16.to_le_bytes());
    for d in t.shape().dims() {
        let d =
            u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    w.write_all(&header)?;
    write_f32s(&mut w, t.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut header = [0u8; TENSOR_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("tensor header: {e}")))?;
    if &header[0..4] != TENSOR_MAGIC {
        return Err(Error::Format(format!(
            "bad tensor magic {:?}",
            &header[0..4]
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!(
            "unsupported tensor version {version}"
        )));
    }
    let rank = u16::from_le_bytes([header[6], header[7]]);
    if rank != 4 {
        return Err(Error::Format(format!("unsupported tensor rank {rank}")));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let o = 8 + 4 * i;
        *d = u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    }
    let shape = Shape::try_from(dims)?;
    let data = read_f32s(&mut r, shape.numel())?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    Tensor::from_vec(shape, data)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(BufReader::new(File::open(path)?))
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; count * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("payload shorter than {count} floats")))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
