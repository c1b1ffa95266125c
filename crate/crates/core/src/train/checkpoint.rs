//! Checkpoint files.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, a JSON header
//! (config, vocabularies, epoch, RNG and optimizer scalars, and a
//! name/shape/offset table), the tensors as little-endian `f64`, and a trailing
//! CRC-32 of everything before it. All integers are little-endian.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{Result, TrainError, Trainer};
use crate::config::TrainConfig;
use crate::data::Vocabularies;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TPN2FCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    vocab: Vocabularies,
    epoch: usize,
    rng: RngState,
    adam: AdamScalars,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    /// `u128` as decimal text.
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct AdamScalars {
    step_count: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn corrupt(msg: impl Into<String>) -> TrainError {
    TrainError::CorruptCheckpoint(msg.into())
}

impl Trainer {
    /// Serialized checkpoint. Parameters come first, then Adam's first and
    /// second moments as `adam.m.<name>` / `adam.v.<name>`.
    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &Tensor)> = Vec::new();
        for (_, p) in self.model.params.iter() {
            tensors.push((p.name.clone(), &p.value));
        }
        for (kind, moments) in [("m", &self.optimizer.m), ("v", &self.optimizer.v)] {
            for ((_, p), t) in self.model.params.iter().zip(moments) {
                tensors.push((format!("adam.{kind}.{}", p.name), t));
            }
        }
        let mut offset = 0;
        let entries = tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        let header = Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            epoch: self.epoch,
            rng: RngState {
                seed: self.rng.get_seed(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            adam: AdamScalars {
                step_count: self.optimizer.step_count,
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                epsilon: self.optimizer.epsilon,
                learning_rate: self.optimizer.learning_rate,
            },
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(24 + json.len() + offset * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &tensors {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length out of range"))?;
        let header: Header =
            serde_json::from_slice(&body[20..data_start]).map_err(|e| corrupt(format!("header: {e}")))?;
        let raw = &body[data_start..];
        if raw.len() % 8 != 0 {
            return Err(corrupt("tensor data is not a whole number of f64 values"));
        }
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut trainer = Trainer::new(header.config, header.vocab)?;
        let n = trainer.model.params.len();
        if header.tensors.len() != 3 * n {
            return Err(corrupt(format!(
                "{} tensors stored, model needs {}",
                header.tensors.len(),
                3 * n
            )));
        }
        let mut expected_offset = 0;
        let mut loaded = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let len: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.offset + len > data.len() {
                return Err(corrupt(format!("bad offset for `{}`", e.name)));
            }
            expected_offset += len;
            loaded.push(Tensor::new(e.shape.clone(), data[e.offset..e.offset + len].to_vec())?);
        }
        if expected_offset != data.len() {
            return Err(corrupt("trailing tensor data"));
        }
        let mut loaded = loaded.into_iter();
        let names: Vec<String> = trainer.model.params.iter().map(|(_, p)| p.name.clone()).collect();
        for (i, p) in trainer.model.params.iter_mut().enumerate() {
            let (entry, t) = (&header.tensors[i], loaded.next().expect("counted"));
            if entry.name != p.name || t.shape() != p.value.shape() {
                return Err(corrupt(format!("parameter `{}` does not match the model", entry.name)));
            }
            p.value = t;
        }
        for (k, kind) in ["m", "v"].into_iter().enumerate() {
            for (i, name) in names.iter().enumerate() {
                let entry = &header.tensors[(k + 1) * n + i];
                let t = loaded.next().expect("counted");
                if entry.name != format!("adam.{kind}.{name}") {
                    return Err(corrupt(format!("unexpected tensor `{}`", entry.name)));
                }
                let slot = if kind == "m" {
                    &mut trainer.optimizer.m[i]
                } else {
                    &mut trainer.optimizer.v[i]
                };
                if slot.shape() != t.shape() {
                    return Err(corrupt(format!("shape mismatch for `{}`", entry.name)));
                }
                *slot = t;
            }
        }
        let a = header.adam;
        trainer.optimizer.step_count = a.step_count;
        trainer.optimizer.beta1 = a.beta1;
        trainer.optimizer.beta2 = a.beta2;
        trainer.optimizer.epsilon = a.epsilon;
        trainer.optimizer.learning_rate = a.learning_rate;
        let word_pos: u128 = header
            .rng
            .word_pos
            .parse()
            .map_err(|_| corrupt("bad RNG position"))?;
        trainer.rng = ChaCha8Rng::from_seed(header.rng.seed);
        trainer.rng.set_stream(header.rng.stream);
        trainer.rng.set_word_pos(word_pos);
        trainer.epoch = header.epoch;
        Ok(trainer)
    }

    /// Writes to a temporary sibling and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_checkpoint_bytes()?;
        let file_name = path
            .file_name()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "checkpoint path has no file name"))?;
        let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }
}
