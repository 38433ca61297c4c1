//! Binary model checkpoints with a JSON metadata sidecar.
//!
//! Layout (little endian): magic, `u64` layer count, then per layer
//! `u64 in_dim`, `u64 out_dim`, `u8 activation`, `f64 leaky_slope`, then
//! every parameter array in declaration order as raw `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, GatLayerParams, GatModel, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RMGATv01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub layer_dims: Vec<(usize, usize)>,
}

/// 64-bit FNV-1a of `text`, as 16 hex digits.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint(model: &GatModel, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(model.layers.len() as u64).to_le_bytes())?;
    for l in &model.layers {
        w.write_all(&(l.in_dim() as u64).to_le_bytes())?;
        w.write_all(&(l.out_dim() as u64).to_le_bytes())?;
        w.write_all(&[match l.activation {
            Activation::Elu => 0,
            Activation::Identity => 1,
        }])?;
        w.write_all(&l.leaky_slope.to_le_bytes())?;
    }
    for p in model.params() {
        for v in p.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::invalid("checkpoint metadata", e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_u64(r).map(f64::from_bits)).collect()
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(GatModel, Option<CheckpointMeta>)> {
    let path = path.as_ref();
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.to_string(),
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    if read_u64(&mut r)? != 3 {
        return Err(bad("expected three layers"));
    }
    let mut heads = Vec::new();
    for _ in 0..3 {
        let i = read_u64(&mut r)? as usize;
        let o = read_u64(&mut r)? as usize;
        let mut act = [0u8; 1];
        r.read_exact(&mut act)?;
        let activation = match act[0] {
            0 => Activation::Elu,
            1 => Activation::Identity,
            _ => return Err(bad("unknown activation code")),
        };
        let slope = f64::from_bits(read_u64(&mut r)?);
        heads.push((i, o, activation, slope));
    }
    let mut layers = Vec::new();
    for (i, o, activation, leaky_slope) in heads {
        layers.push(GatLayerParams {
            weight: Tensor::matrix(i, o, read_f64s(&mut r, i * o)?)?,
            attention_vec: Tensor::vector(read_f64s(&mut r, 2 * o)?),
            bias: Tensor::vector(read_f64s(&mut r, o)?),
            leaky_slope,
            activation,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after parameters"));
    }
    let layers: [GatLayerParams; 3] = layers.try_into().map_err(|_| bad("expected three layers"))?;
    let model = GatModel { layers };
    model.validate()?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let text = std::fs::read_to_string(&side)?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: side.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?)
    } else {
        None
    };
    Ok((model, meta))
}
