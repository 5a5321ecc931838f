use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model shape and optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub max_input_len: usize,
    pub max_target_len: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Indexing examples per retrieval example.
    pub mix_ratio: f64,
    /// Consecutive `max_input_len` windows of each document used as
    /// separate indexing inputs.
    pub index_chunks: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            ffn_dim: 256,
            max_input_len: 128,
            max_target_len: 16,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            epochs: 200,
            mix_ratio: 1.0,
            index_chunks: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("ffn_dim", self.ffn_dim),
            ("max_input_len", self.max_input_len),
            ("max_target_len", self.max_target_len),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("index_chunks", self.index_chunks),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        let reals = [
            ("learning_rate", self.learning_rate, true),
            ("beta1", self.beta1, false),
            ("beta2", self.beta2, false),
            ("eps", self.eps, false),
            ("mix_ratio", self.mix_ratio, true),
        ];
        for (name, v, zero_ok) in reals {
            if !v.is_finite() || v < 0.0 || (!zero_ok && v == 0.0) {
                return Err(Error::InvalidArgument(format!("{name} out of range: {v}")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidArgument("Adam betas must be below 1".into()));
        }
        Ok(())
    }
}
