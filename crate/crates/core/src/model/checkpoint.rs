//! Checkpoint file: `CZK1`, u32 header length, JSON header, u32 tensor
//! count, then per tensor a u32 name length, the UTF-8 name, and one `CZT1`
//! tensor block. Integers little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding_store::{read_tensor_from, write_tensor_to};
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, PARAM_NAMES};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CZK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub d: usize,
    pub l: usize,
    pub w: usize,
    pub h: usize,
    pub e: usize,
    pub tau: f64,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f64>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f64>, seed: u64, epoch: usize) -> Self {
        let ModelDims { d, l, w, h, e } = params.dims;
        Self {
            header: CheckpointHeader {
                d,
                l,
                w,
                h,
                e,
                tau: params.temperature,
                seed,
                epoch,
            },
            params,
        }
    }
}

fn invalid(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> std::io::Result<()> {
    let header = serde_json::to_vec(&ckpt.header).map_err(|e| invalid(e.to_string()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    let tensors = ckpt.params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in PARAM_NAMES.iter().zip(tensors) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_tensor_to(w, t)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, n: u32, limit: u32) -> std::io::Result<Vec<u8>> {
    if n > limit {
        return Err(invalid(format!("field length {n} exceeds {limit}")));
    }
    let mut buf = vec![0u8; n as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> std::io::Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(invalid("bad checkpoint magic"));
    }
    let len = read_u32(r)?;
    let header: CheckpointHeader = serde_json::from_slice(&read_bytes(r, len, 1 << 20)?)
        .map_err(|e| invalid(format!("checkpoint header: {e}")))?;
    let count = read_u32(r)? as usize;
    if count != PARAM_NAMES.len() {
        return Err(invalid(format!(
            "expected {} tensors, found {count}",
            PARAM_NAMES.len()
        )));
    }
    let dims = ModelDims {
        d: header.d,
        l: header.l,
        w: header.w,
        h: header.h,
        e: header.e,
    };
    let mut params =
        ModelParams::<f64>::init(dims, header.tau, header.seed).map_err(|e| invalid(e.to_string()))?;
    for (name, slot) in PARAM_NAMES.iter().zip(params.tensors_mut()) {
        let n = read_u32(r)?;
        let got = String::from_utf8(read_bytes(r, n, 256)?).map_err(|e| invalid(e.to_string()))?;
        if got != *name {
            return Err(invalid(format!("expected tensor {name:?}, found {got:?}")));
        }
        let t = read_tensor_from(r)?;
        if t.shape() != slot.shape() {
            return Err(invalid(format!(
                "tensor {name}: shape {:?} does not match header dims {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok(Checkpoint { header, params })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, ckpt)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file)).map_err(|e| Error::io(path, e))
}
