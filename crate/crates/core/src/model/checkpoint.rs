//! Binary checkpoint format (little-endian throughout):
//!
//! ```text
//! "VHGN"                 4 bytes
//! version                u32
//! config_len             u32, then config_len bytes of UTF-8 `key=value\n` lines
//! record_count           u32
//! record_count × {
//!     name_len           u32, then name_len bytes of UTF-8
//!     rows, cols         u32, u32
//!     values             rows·cols × f32, row-major
//! }
//! ```
//!
//! Records appear in ascending name order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Ablations, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VHGN";
pub const CHECKPOINT_VERSION: u32 = 1;

impl ModelConfig {
    /// `key=value` lines, one per field, in a fixed order.
    pub fn to_kv(&self) -> String {
        let a = &self.ablations;
        let mut s = String::new();
        for (k, v) in [
            ("model.hidden", self.hidden.to_string()),
            ("model.layers", self.layers.to_string()),
            ("model.levels", self.levels.to_string()),
            ("model.k_geom", self.k_geom.to_string()),
            ("model.hierarchical_grid", a.hierarchical_grid.to_string()),
            ("model.grid_net_mp", a.grid_net_mp.to_string()),
            ("model.geom_mp", a.geom_mp.to_string()),
            ("model.gated_aggregation", a.gated_aggregation.to_string()),
            ("model.enriched_features", a.enriched_features.to_string()),
            ("model.weighted_loss", a.weighted_loss.to_string()),
            ("model.variance_reg", a.variance_reg.to_string()),
        ] {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Sets one dotted `model.*` key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: `{value}` is not a non-negative integer")))
        };
        let flag = || parse_bool(key, value);
        let a: &mut Ablations = &mut self.ablations;
        match key {
            "model.hidden" => self.hidden = num()?,
            "model.layers" => self.layers = num()?,
            "model.levels" => self.levels = num()?,
            "model.k_geom" => self.k_geom = num()?,
            "model.hierarchical_grid" => a.hierarchical_grid = flag()?,
            "model.grid_net_mp" => a.grid_net_mp = flag()?,
            "model.geom_mp" => a.geom_mp = flag()?,
            "model.gated_aggregation" => a.gated_aggregation = flag()?,
            "model.enriched_features" => a.enriched_features = flag()?,
            "model.weighted_loss" => a.weighted_loss = flag()?,
            "model.variance_reg" => a.variance_reg = flag()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed line `{line}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: `{value}` is not a boolean"))),
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serialises parameters (as `f32`) with their config.
pub fn write_checkpoint<T: Scalar>(params: &ModelParams<T>, cfg: &ModelConfig) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let kv = cfg.to_kv();
    put_u32(&mut out, kv.len())?;
    out.extend_from_slice(kv.as_bytes());
    put_u32(&mut out, params.tensors.len())?;
    for (name, m) in &params.tensors {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, m.rows())?;
        put_u32(&mut out, m.cols())?;
        for v in m.as_slice() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(ModelParams<T>, ModelConfig)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let cfg = ModelConfig::from_kv(c.str()?)?;
    let count = c.u32()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name = c.str()?.to_string();
        let rows = c.u32()?;
        let cols = c.u32()?;
        let raw = c.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        tensors.insert(name, Matrix::from_vec(rows, cols, data)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let params = ModelParams { tensors };
    params.check_layout(&cfg)?;
    Ok((params, cfg))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, params: &ModelParams<T>, cfg: &ModelConfig) -> Result<()> {
    let bytes = write_checkpoint(params, cfg)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ModelParams<T>, ModelConfig)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_checkpoint(&bytes)
}
