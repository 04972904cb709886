//! Checkpoint container: magic "HARC", version, config block, named f32
//! tensor tables for parameters and buffers, optional optimizer state, and
//! the build seed. Load -> save round-trips bit-identically.

use std::path::Path;

use har_core::neural::checkpoint::{NamedTensor, NetworkCheckpoint, OptimizerState};
use har_core::neural::NetConfig;

use crate::binio::{Reader, Writer};
use crate::error::CliError;

const MAGIC: &[u8; 4] = b"HARC";
const VERSION: u16 = 1;

fn write_tensor_table(w: &mut Writer, tensors: &[NamedTensor]) {
    w.u32(tensors.len() as u32);
    for t in tensors {
        w.str16(&t.name);
        w.u8(t.shape.len() as u8);
        for &d in &t.shape {
            w.u32(d as u32);
        }
        for &v in &t.data {
            w.f32(v);
        }
    }
}

fn read_tensor_table(r: &mut Reader) -> Result<Vec<NamedTensor>, CliError> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str16()?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(r.f32()?);
        }
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}

pub fn write_checkpoint(ckpt: &NetworkCheckpoint, path: &Path) -> Result<(), CliError> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    let c = &ckpt.cfg;
    for v in [
        c.width_base,
        c.n_stages,
        c.blocks_per_stage,
        c.feature_dim,
        c.kernel_size,
        c.input_t,
        c.n_classes,
    ] {
        w.u32(v as u32);
    }
    w.u64(ckpt.seed);
    write_tensor_table(&mut w, &ckpt.params);
    write_tensor_table(&mut w, &ckpt.buffers);
    match &ckpt.optimizer {
        None => w.u8(0),
        Some(o) => {
            w.u8(1);
            w.u64(o.step);
            write_tensor_table(&mut w, &o.m);
            write_tensor_table(&mut w, &o.v);
        }
    }
    std::fs::write(path, &w.buf)
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

pub fn read_checkpoint(path: &Path) -> Result<NetworkCheckpoint, CliError> {
    let buf = std::fs::read(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let what = format!("checkpoint {}", path.display());
    let mut r = Reader::new(&buf, &what);
    if r.bytes(4)? != MAGIC {
        return Err(CliError::Runtime(format!("{what}: bad magic (not a HARC checkpoint)")));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CliError::Runtime(format!("{what}: unsupported version {version}")));
    }
    let mut vals = [0usize; 7];
    for v in vals.iter_mut() {
        *v = r.u32()? as usize;
    }
    let cfg = NetConfig {
        width_base: vals[0],
        n_stages: vals[1],
        blocks_per_stage: vals[2],
        feature_dim: vals[3],
        kernel_size: vals[4],
        input_t: vals[5],
        n_classes: vals[6],
    };
    let seed = r.u64()?;
    let params = read_tensor_table(&mut r)?;
    let buffers = read_tensor_table(&mut r)?;
    let optimizer = if r.u8()? == 1 {
        let step = r.u64()?;
        let m = read_tensor_table(&mut r)?;
        let v = read_tensor_table(&mut r)?;
        Some(OptimizerState { m, v, step })
    } else {
        None
    };
    r.done()?;
    Ok(NetworkCheckpoint { cfg, seed, params, buffers, optimizer })
}
