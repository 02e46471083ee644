//! Binary tensor container: `CZT1`, u32 rank, rank × u64 extents, then the
//! row-major f32 payload. All integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"CZT1";

/// Upper bound on rank accepted when reading, to reject garbage headers early.
const MAX_RANK: u32 = 8;

pub fn write_tensor_to<W: Write>(w: &mut W, tensor: &Tensor<f64>) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
    for &e in tensor.shape() {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads one tensor, upcasting the payload to f64.
pub fn read_tensor_from<R: Read>(r: &mut R) -> std::io::Result<Tensor<f64>> {
    use std::io::{Error as IoError, ErrorKind};

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(IoError::new(ErrorKind::InvalidData, "bad tensor magic"));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let rank = u32::from_le_bytes(buf4);
    if rank > MAX_RANK {
        return Err(IoError::new(
            ErrorKind::InvalidData,
            format!("tensor rank {rank} too large"),
        ));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut buf8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf8)?;
        shape.push(u64::from_le_bytes(buf8) as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| IoError::new(ErrorKind::InvalidData, "tensor extent overflow"))?;
    let mut payload = vec![0u8; n.checked_mul(4).ok_or_else(|| {
        IoError::new(ErrorKind::InvalidData, "tensor extent overflow")
    })?];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Tensor::new(shape, data).map_err(|e| IoError::new(ErrorKind::InvalidData, e.to_string()))
}

pub fn write_tensor(path: &Path, tensor: &Tensor<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(&mut w, tensor)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let t = read_tensor_from(&mut r).map_err(|e| Error::io(path, e))?;
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => Ok(t),
        Ok(_) => Err(Error::load(
            path.display().to_string(),
            "trailing bytes after tensor payload",
        )),
        Err(e) => Err(Error::io(path, e)),
    }
}
