//! Binary checkpoint format (little-endian):
//!
//! ```text
//! "SRLPCKPT"
//! u32 config_len, config_len bytes of JSON {"model": .., "training": ..}
//! u32 tensor_count
//! per tensor: u32 name_len, name, u32 rank, rank × u32 dims, f64 values
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{stored_dims, ModelConfig, ModelError, ModelParams, Result};
use crate::event_data::FactorScaler;
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SRLPCKPT";

const SCALER_MEAN: &str = "factor_scaler.mean";
const SCALER_STD: &str = "factor_scaler.std";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub scaler: Option<FactorScaler>,
    /// Free-form training settings, kept for provenance.
    pub training: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    #[serde(default)]
    training: Option<serde_json::Value>,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.display().to_string(), source }
}

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("length exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn get_u32(r: &mut impl Read, what: &str) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad(format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self { params, scaler: None, training: None }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        Self::read_from(&mut BufReader::new(file))
    }

    fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out: Vec<_> = self
            .params
            .tensors()
            .into_iter()
            .map(|(n, m)| {
                let dims = stored_dims(&n, m);
                (n, dims, m.as_slice().to_vec())
            })
            .collect();
        if let Some(s) = &self.scaler {
            if let (Some(mean), Some(std)) = (s.mean(), s.std()) {
                out.push((SCALER_MEAN.into(), vec![mean.len()], mean.to_vec()));
                out.push((SCALER_STD.into(), vec![std.len()], std.to_vec()));
            }
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let header = Header { model: self.params.config.clone(), training: self.training.clone() };
        let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        put_u32(w, json.len())?;
        w.write_all(&json)?;
        let tensors = self.named_tensors();
        put_u32(w, tensors.len())?;
        for (name, dims, data) in tensors {
            put_u32(w, name.len())?;
            w.write_all(name.as_bytes())?;
            put_u32(w, dims.len())?;
            for d in dims {
                put_u32(w, d)?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Every tensor the config implies must be present with its exact shape;
    /// unknown tensors are rejected.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let len = get_u32(r, "config length")?;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| bad("truncated config"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("config: {e}")))?;
        let mut params = ModelParams::zeros(&header.model);
        header.model.validate()?;

        let count = get_u32(r, "tensor count")?;
        let mut found: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
        for _ in 0..count {
            let name_len = get_u32(r, "name length")?;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
            let rank = get_u32(r, "rank")?;
            if rank == 0 || rank > 2 {
                return Err(bad(format!("{name}: unsupported rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(get_u32(r, "dims")?);
            }
            let n: usize = dims.iter().product();
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(|_| bad(format!("{name}: truncated data")))?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if found.insert(name.clone(), (dims, data)).is_some() {
                return Err(bad(format!("duplicate tensor {name}")));
            }
        }

        for (name, m) in params.tensors_mut() {
            let (dims, data) = found.remove(&name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
            let expected = stored_dims(&name, m);
            if dims != expected {
                return Err(ModelError::Shape { what: name, expected: format!("{expected:?}"), found: format!("{dims:?}") });
            }
            *m = Matrix::from_vec(m.rows(), m.cols(), data);
        }

        let scaler = match (found.remove(SCALER_MEAN), found.remove(SCALER_STD)) {
            (None, None) => None,
            (Some((dm, mean)), Some((ds, std))) => {
                let d = header.model.d_factor;
                if dm != [d] || ds != [d] {
                    return Err(ModelError::Shape {
                        what: "factor_scaler".into(),
                        expected: format!("[{d}]"),
                        found: format!("{dm:?}/{ds:?}"),
                    });
                }
                Some(FactorScaler::from_stats(mean, std))
            }
            _ => return Err(bad("factor scaler needs both mean and std")),
        };
        if let Some(name) = found.keys().next() {
            return Err(bad(format!("unknown tensor {name}")));
        }
        Ok(Self { params, scaler, training: header.training })
    }
}
