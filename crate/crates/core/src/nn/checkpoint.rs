//! Checkpoint directories: `header.json` plus one f64 DQTF file per tensor.
//!
//! Files are `{net}_{layer}_w.dqtf`, `{net}_{layer}_b.dqtf`,
//! `input_shift.dqtf` and `input_scale.dqtf`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{read_tensor, write_tensor, RawTensor, TensorData};

use super::{Activation, Layer, Mlp, Standardizer};

pub const SCHEMA_VERSION: u32 = 1;
const HEADER: &str = "header.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkHeader {
    pub name: String,
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    /// `"predictor"` or `"scorer"`.
    pub model: String,
    /// Identifies the feature layout the networks were trained on.
    pub feature_schema: String,
    pub feature_dim: usize,
    pub networks: Vec<NetworkHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub networks: Vec<Mlp>,
    pub standardizer: Standardizer,
}

fn tensor_f64(dims: Vec<usize>, data: Vec<f64>) -> Result<RawTensor> {
    RawTensor::new(dims, TensorData::F64(data))
}

fn read_f64(path: &Path, dims: &[usize]) -> Result<Vec<f64>> {
    let t = read_tensor(path)?;
    if t.dims != dims {
        return Err(Error::Checkpoint(format!(
            "{}: shape {:?}, header says {dims:?}",
            path.display(),
            t.dims
        )));
    }
    match t.data {
        TensorData::F64(v) => Ok(v),
        TensorData::F32(_) => Err(Error::Checkpoint(format!("{}: expected f64 payload", path.display()))),
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if ckpt.networks.len() != ckpt.header.networks.len() {
        return Err(Error::Checkpoint("header and network list differ in length".into()));
    }
    for (h, net) in ckpt.header.networks.iter().zip(&ckpt.networks) {
        if h.sizes != net.sizes() {
            return Err(Error::Checkpoint(format!("network {} does not match its header sizes", h.name)));
        }
        for (i, l) in net.layers.iter().enumerate() {
            let (r, c) = l.weight.dim();
            let w = tensor_f64(vec![r, c], l.weight.iter().copied().collect())?;
            write_tensor(&w, dir.join(format!("{}_{i}_w.dqtf", h.name)))?;
            write_tensor(&tensor_f64(vec![r], l.bias.to_vec())?, dir.join(format!("{}_{i}_b.dqtf", h.name)))?;
        }
    }
    let d = ckpt.standardizer.dim();
    write_tensor(&tensor_f64(vec![d], ckpt.standardizer.shift.clone())?, dir.join("input_shift.dqtf"))?;
    write_tensor(&tensor_f64(vec![d], ckpt.standardizer.scale.clone())?, dir.join("input_scale.dqtf"))?;
    let mut json = serde_json::to_string_pretty(&ckpt.header).map_err(|e| Error::json("checkpoint header", e))?;
    json.push('\n');
    let path = dir.join(HEADER);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let path = dir.join(HEADER);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "schema version {} (this build reads {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut networks = Vec::new();
    for h in &header.networks {
        if h.sizes.len() < 2 {
            return Err(Error::Checkpoint(format!("network {} has sizes {:?}", h.name, h.sizes)));
        }
        let mut layers = Vec::new();
        for (i, w) in h.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wv = read_f64(&dir.join(format!("{}_{i}_w.dqtf", h.name)), &[fan_out, fan_in])?;
            let bv = read_f64(&dir.join(format!("{}_{i}_b.dqtf", h.name)), &[fan_out])?;
            layers.push(Layer {
                weight: Array2::from_shape_vec((fan_out, fan_in), wv).expect("shape checked"),
                bias: Array1::from(bv),
            });
        }
        networks.push(Mlp {
            layers,
            hidden: h.hidden,
            output: h.output,
        });
    }
    let d = header.feature_dim;
    let standardizer = Standardizer {
        shift: read_f64(&dir.join("input_shift.dqtf"), &[d])?,
        scale: read_f64(&dir.join("input_scale.dqtf"), &[d])?,
    };
    Ok(Checkpoint {
        header,
        networks,
        standardizer,
    })
}
