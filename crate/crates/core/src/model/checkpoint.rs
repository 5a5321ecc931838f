//! Model checkpoints: one JSON header line, a newline, then every tensor as
//! little-endian f64 in [`ModelParams::tensors`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::codec::TargetMode;
use super::config::TrainConfig;
use super::network::{ModelDims, ModelParams};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::hash::Sha256Hex;
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "dsi-checkpoint-1";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub dims: ModelDims,
    pub config: TrainConfig,
    pub target_mode: TargetMode,
    pub merged_tokens: Vec<String>,
    pub input_vocab: Vec<String>,
    pub corpus_hash: String,
    pub assignment_hash: String,
    pub vocab_hash: String,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub header: CheckpointHeader,
    pub params: ModelParams<T>,
}

/// SHA-256 over the vocabulary tokens in id order.
pub fn vocabulary_hash(vocab: &Vocabulary) -> String {
    let mut h = Sha256Hex::new();
    for t in vocab.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    h.finish()
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = self.header.clone();
        header.format = CHECKPOINT_FORMAT.to_string();
        header.dims = self.params.dims;
        header.tensors = self
            .params
            .tensors()
            .iter()
            .map(|(name, m)| TensorInfo {
                name: name.to_string(),
                rows: m.rows,
                cols: m.cols,
            })
            .collect();
        let json = serde_json::to_string(&header).map_err(|e| Error::format("checkpoint header", e))?;
        let mut out = Vec::with_capacity(json.len() + 1 + 8 * self.params.parameter_count());
        out.extend_from_slice(json.as_bytes());
        out.push(b'\n');
        for (_, m) in self.params.tensors() {
            for v in &m.data {
                out.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("checkpoint", "missing header line"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[..split]).map_err(|e| Error::format("checkpoint header", e))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::format("checkpoint", format!("unsupported format {:?}", header.format)));
        }
        let mut params = ModelParams::<T>::zeros(header.dims);
        let mut body = &bytes[split + 1..];
        {
            let tensors = params.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(Error::format("checkpoint", "tensor count differs from model"));
            }
            for ((name, m), info) in tensors.into_iter().zip(&header.tensors) {
                if info.name != name || info.rows != m.rows || info.cols != m.cols {
                    return Err(Error::format(
                        "checkpoint",
                        format!("tensor {} has shape {}x{}, expected {name} {}x{}", info.name, info.rows, info.cols, m.rows, m.cols),
                    ));
                }
                let need = 8 * m.data.len();
                if body.len() < need {
                    return Err(Error::format("checkpoint", "truncated tensor data"));
                }
                for (v, chunk) in m.data.iter_mut().zip(body[..need].chunks_exact(8)) {
                    *v = T::from_f64_lossy(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
                }
                body = &body[need..];
            }
        }
        if !body.is_empty() {
            return Err(Error::format("checkpoint", format!("{} trailing bytes", body.len())));
        }
        Ok(Self { header, params })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens(self.header.input_vocab.clone())
    }

    /// Fails unless the stored hashes match the given artifacts.
    pub fn verify(&self, corpus_hash: &str, assignment_hash: &str) -> Result<()> {
        if self.header.corpus_hash != corpus_hash {
            return Err(Error::ArtifactMismatch("checkpoint was trained on a different corpus".into()));
        }
        if self.header.assignment_hash != assignment_hash {
            return Err(Error::ArtifactMismatch("checkpoint was trained on a different docid assignment".into()));
        }
        if vocabulary_hash(&self.vocabulary()) != self.header.vocab_hash {
            return Err(Error::ArtifactMismatch("checkpoint vocabulary hash does not match its tokens".into()));
        }
        Ok(())
    }
}
