//! Binary checkpoint format, version 1. All integers and floats are
//! little-endian.
//!
//! ```text
//! magic      8 bytes  "DCFCKPT\0"
//! version    u32
//! header     u32 length + UTF-8 JSON {"spec": ModelSpec, "seed": u64, "step": u64}
//! frozen     u32 count + one byte per unit (0/1)
//! params     u32 count, each:
//!              u32 name length + UTF-8 name
//!              u32 rank + u64 per dimension
//!              f64 values, f64 Adam first moments, f64 Adam second moments
//! batchnorm  u32 count, each:
//!              u32 name length + UTF-8 name
//!              u64 channels + f64 running means + f64 running variances
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ModelState;
use super::spec::ModelSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DCFCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    seed: u64,
    step: u64,
}

pub fn write_checkpoint<W: Write>(state: &ModelState, mut w: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&Header {
        spec: state.spec().clone(),
        seed: state.seed(),
        step: state.step(),
    })
    .map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_bytes(&mut w, &header)?;
    w.write_all(&(state.frozen_mask().len() as u32).to_le_bytes())?;
    for &f in state.frozen_mask() {
        w.write_all(&[u8::from(f)])?;
    }
    w.write_all(&(state.params().len() as u32).to_le_bytes())?;
    for (i, p) in state.params().iter().enumerate() {
        write_bytes(&mut w, p.name.as_bytes())?;
        w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
        for &d in &p.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let (m, v) = state.adam_moments(i);
        for vals in [&p.value[..], m, v] {
            write_f64s(&mut w, vals)?;
        }
    }
    w.write_all(&(state.bn_stats().len() as u32).to_le_bytes())?;
    for s in state.bn_stats() {
        write_bytes(&mut w, s.name.as_bytes())?;
        w.write_all(&(s.mean.len() as u64).to_le_bytes())?;
        write_f64s(&mut w, &s.mean)?;
        write_f64s(&mut w, &s.var)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> std::result::Result<ModelState, String> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| e.to_string())?;
    if &magic != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let header: Header = serde_json::from_slice(&read_bytes(&mut r)?).map_err(|e| e.to_string())?;
    let units = read_u32(&mut r)? as usize;
    let mut frozen = Vec::with_capacity(units);
    for _ in 0..units {
        let mut b = [0u8; 1];
        r.read_exact(&mut b).map_err(|e| e.to_string())?;
        frozen.push(b[0] != 0);
    }
    let count = read_u32(&mut r)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut r)?).map_err(|e| e.to_string())?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let len: usize = shape.iter().product();
        let value = read_f64s(&mut r, len)?;
        let m = read_f64s(&mut r, len)?;
        let v = read_f64s(&mut r, len)?;
        params.push((name, shape, value, m, v));
    }
    let count = read_u32(&mut r)? as usize;
    let mut bn = Vec::with_capacity(count);
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut r)?).map_err(|e| e.to_string())?;
        let channels = read_u64(&mut r)? as usize;
        let mean = read_f64s(&mut r, channels)?;
        let var = read_f64s(&mut r, channels)?;
        bn.push((name, mean, var));
    }
    ModelState::from_parts(header.spec, header.seed, header.step, frozen, params, bn).map_err(|e| e.to_string())
}

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(state, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes[..]).map_err(|reason| Error::Format {
        kind: "checkpoint",
        path: path.to_owned(),
        reason,
    })
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)
}

fn write_f64s<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_u32<R: Read>(r: &mut R) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| e.to_string())?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::result::Result<u64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| e.to_string())?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> std::result::Result<Vec<u8>, String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn read_f64s<R: Read>(r: &mut R, len: usize) -> std::result::Result<Vec<f64>, String> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf).map_err(|e| e.to_string())?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = ModelSpec {
            input_side: 8,
            stem_channels: 2,
            stem_stride: 1,
            blocks_per_stage: vec![1, 1],
        };
        let mut state = ModelState::new(spec, 11).unwrap();
        state.freeze(2).unwrap();
        state.adam_m[0][0] = 0.125;
        state.bn[1].mean[0] = -3.5;
        state.step = 17;
        let mut buf = Vec::new();
        write_checkpoint(&state, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, state);
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let state = ModelState::new(ModelSpec::default(), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&state, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        assert!(read_checkpoint(&b"P6\n1 1\n255\n"[..]).is_err());
        buf[8] = 9;
        assert!(read_checkpoint(&buf[..]).unwrap_err().contains("version"));
    }
}
