//! Checkpoint container.
//!
//! ```text
//! b"IBCKPT01"            8-byte magic
//! u64 little-endian      manifest length in bytes
//! manifest               UTF-8 JSON (CheckpointManifest)
//! payload                raw little-endian tensor data
//! ```
//!
//! Each manifest tensor entry gives its name, dtype (`f32` or `f64`), shape and
//! byte range inside the payload. Model parameters and buffers are stored under
//! their module names; Adam moments under `opt.gen.m.<name>`, `opt.gen.v.<name>`,
//! `opt.disc.m.<name>` and `opt.disc.v.<name>`. RNG streams and the batch
//! iterator are serialized into the manifest, so a reload resumes bit-exactly.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::Adam;
use super::TrainConfig;
use crate::data::BatchIterator;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::Module;
use crate::tensor::{Float, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IBCKPT01";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

/// Noise and frame-index streams; the shuffle stream lives in the batch iterator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub noise: ChaCha8Rng,
    pub frame: ChaCha8Rng,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub step: u64,
    pub config_hash: String,
    pub metric: Option<f64>,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub gen_opt_step: u64,
    pub disc_opt_step: u64,
    pub rng: RngStreams,
    pub iterator: BatchIterator,
    /// Caller-supplied run description, stored verbatim.
    #[serde(default)]
    pub provenance: Option<serde_json::Value>,
    pub tensors: Vec<TensorEntry>,
}

/// Complete trainer state at a step boundary.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub step: u64,
    pub metric: Option<f64>,
    pub train_config: TrainConfig,
    pub model: Model<f32>,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub rng: RngStreams,
    pub iterator: BatchIterator,
    pub provenance: Option<serde_json::Value>,
}

/// SHA-256 over the JSON encoding of both configurations.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model).expect("config serializes"));
    h.update([0u8]);
    h.update(serde_json::to_vec(train).expect("config serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Writer {
    entries: Vec<TensorEntry>,
    payload: Vec<u8>,
}

impl Writer {
    fn push<F: Float>(&mut self, name: String, dtype: DType, shape: &[usize], data: &[F]) {
        let offset = self.payload.len() as u64;
        for &v in data {
            v.write_le(&mut self.payload);
        }
        self.entries.push(TensorEntry {
            name,
            dtype,
            shape: shape.to_vec(),
            offset,
            len: self.payload.len() as u64 - offset,
        });
    }

    fn push_moments(&mut self, prefix: &str, moments: &BTreeMap<String, Vec<f64>>) {
        for (name, v) in moments {
            self.push(format!("{prefix}.{name}"), DType::F64, &[v.len()], v);
        }
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer {
            entries: Vec::new(),
            payload: Vec::new(),
        };
        for (name, t) in self.model.named_tensors() {
            w.push(name, DType::F32, t.shape(), t.data());
        }
        w.push_moments("opt.gen.m", &self.gen_opt.m);
        w.push_moments("opt.gen.v", &self.gen_opt.v);
        w.push_moments("opt.disc.m", &self.disc_opt.m);
        w.push_moments("opt.disc.v", &self.disc_opt.v);
        let manifest = CheckpointManifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            step: self.step,
            config_hash: config_hash(self.model.config(), &self.train_config),
            metric: self.metric,
            model_config: self.model.config().clone(),
            train_config: self.train_config.clone(),
            gen_opt_step: self.gen_opt.step,
            disc_opt_step: self.disc_opt.step,
            rng: self.rng.clone(),
            iterator: self.iterator.clone(),
            provenance: self.provenance.clone(),
            tensors: w.entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + w.payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&w.payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, payload) = read_manifest(bytes)?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        if config_hash(&manifest.model_config, &manifest.train_config) != manifest.config_hash {
            return Err(Error::Checkpoint("config hash does not match the stored configuration".into()));
        }
        let mut f32s = HashMap::new();
        let mut f64s = HashMap::new();
        for e in &manifest.tensors {
            let start = e.offset as usize;
            let end = start
                .checked_add(e.len as usize)
                .filter(|&end| end <= payload.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} lies outside the payload", e.name)))?;
            let raw = &payload[start..end];
            let count: usize = e.shape.iter().product();
            match e.dtype {
                DType::F32 => {
                    f32s.insert(e.name.clone(), decode::<f32>(e, raw, count)?);
                }
                DType::F64 => {
                    f64s.insert(e.name.clone(), decode::<f64>(e, raw, count)?.into_vec());
                }
            }
        }
        let mut model = Model::<f32>::new(&manifest.model_config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let expected = model.named_tensors();
        for (name, t) in &expected {
            match f32s.get(name) {
                Some(v) if v.shape() == t.shape() => {}
                Some(v) => {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name} has shape {:?}, expected {:?}",
                        v.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("missing tensor {name}"))),
            }
        }
        if f32s.len() != expected.len() {
            return Err(Error::Checkpoint("checkpoint holds tensors the model does not define".into()));
        }
        model.assign(&f32s);
        let opt = |prefix: &str, step: u64| {
            let mut a = Adam::new(manifest.train_config.adam());
            a.step = step;
            for (key, v) in &f64s {
                if let Some(name) = key.strip_prefix(&format!("{prefix}.m.")) {
                    a.m.insert(name.to_string(), v.clone());
                } else if let Some(name) = key.strip_prefix(&format!("{prefix}.v.")) {
                    a.v.insert(name.to_string(), v.clone());
                }
            }
            a
        };
        Ok(Checkpoint {
            step: manifest.step,
            metric: manifest.metric,
            gen_opt: opt("opt.gen", manifest.gen_opt_step),
            disc_opt: opt("opt.disc", manifest.disc_opt_step),
            train_config: manifest.train_config,
            model,
            rng: manifest.rng,
            iterator: manifest.iterator,
            provenance: manifest.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn decode<F: Float>(e: &TensorEntry, raw: &[u8], count: usize) -> Result<Tensor<F>> {
    if raw.len() != count * F::BYTES {
        return Err(Error::Checkpoint(format!("tensor {} has {} bytes for {count} values", e.name, raw.len())));
    }
    let data = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
    Ok(Tensor::from_vec(&e.shape, data))
}

fn read_manifest(bytes: &[u8]) -> Result<(CheckpointManifest, &[u8])> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if len > body.len() {
        return Err(Error::Checkpoint("truncated manifest".into()));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&body[..len])?;
    Ok((manifest, &body[len..]))
}

/// Reads only the manifest, without decoding tensors.
pub fn read_checkpoint_manifest(path: &Path) -> Result<CheckpointManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_manifest(&bytes).map(|(m, _)| m)
}
