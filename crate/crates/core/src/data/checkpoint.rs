//! Checkpoint files: a JSON header line (format version, model config and a
//! manifest of `(name, shape, byte offset)`) followed by every parameter as
//! little-endian `f32`, in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::split_header;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, PrismModel};
use crate::numerics::{HasParams, Rng, Tensor};

pub const CHECKPOINT_FORMAT: &str = "prism-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    params: Vec<ManifestEntry>,
    payload_bytes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &PrismModel<f32>) -> Self {
        Self {
            config: model.config.clone(),
            params: model
                .params()
                .into_iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Rebuild the model; names and shapes must match the config's layout.
    pub fn to_model(&self) -> Result<PrismModel<f32>> {
        let mut model = PrismModel::<f32>::new(&self.config, &mut Rng::new(0))?;
        let mut slots = model.params_mut();
        if slots.len() != self.params.len() {
            return Err(Error::Parse(format!(
                "checkpoint lists {} parameters, config implies {}",
                self.params.len(),
                slots.len()
            )));
        }
        for (slot, (name, value)) in slots.iter_mut().zip(&self.params) {
            if &slot.name != name || slot.value.shape() != value.shape() {
                return Err(Error::Parse(format!(
                    "checkpoint parameter {name} {:?} does not match {} {:?}",
                    value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            slot.value = value.clone();
        }
        drop(slots);
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let manifest: Vec<ManifestEntry> = self
            .params
            .iter()
            .map(|(name, t)| {
                let e = ManifestEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.len();
                e
            })
            .collect();
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params: manifest,
            payload_bytes: offset,
        };
        let mut out = serde_json::to_vec(&header).expect("header serialises");
        out.push(b'\n');
        for (_, t) in &self.params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (Header, _) = split_header(bytes, "checkpoint")?;
        if h.format != CHECKPOINT_FORMAT || h.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint: unsupported format {:?} version {}",
                h.format, h.version
            )));
        }
        if payload.len() != h.payload_bytes {
            return Err(Error::Parse(format!(
                "checkpoint: payload has {} bytes, header declares {}",
                payload.len(),
                h.payload_bytes
            )));
        }
        let mut params = Vec::with_capacity(h.params.len());
        let mut expected_offset = 0;
        for e in h.params {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.offset + 4 * n > payload.len() {
                return Err(Error::Parse(format!(
                    "checkpoint: parameter {} at byte offset {} is out of place",
                    e.name, e.offset
                )));
            }
            let data = payload[e.offset..e.offset + 4 * n]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            expected_offset = e.offset + 4 * n;
            params.push((e.name, Tensor::new(&e.shape, data)?));
        }
        if expected_offset != payload.len() {
            return Err(Error::Parse("checkpoint: trailing payload bytes".into()));
        }
        Ok(Self {
            config: h.config,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
