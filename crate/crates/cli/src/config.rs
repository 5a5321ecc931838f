use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use dsi_core::model::TrainConfig;

use crate::UsageError;

/// Optional JSON run configuration. Every key may also be given as a flag;
/// flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub limit: Option<usize>,
    pub test_fraction: Option<f64>,
    pub embedder: Option<String>,
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: Option<usize>,
    pub strategy: Option<String>,
    pub structure: Option<String>,
    pub target_mode: Option<String>,
    pub beam: Option<usize>,
    pub loss_target: Option<f64>,
    pub sizes: Option<Vec<usize>>,

    pub embed_dim: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub max_input_len: Option<usize>,
    pub max_target_len: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub mix_ratio: Option<f64>,
    pub index_chunks: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory holding every artifact.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Model and optimiser flags.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    #[arg(long)]
    pub max_input_len: Option<usize>,
    #[arg(long)]
    pub max_target_len: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub mix_ratio: Option<f64>,
    #[arg(long)]
    pub index_chunks: Option<usize>,
    /// Stop once an epoch's mean loss drops below this value.
    #[arg(long)]
    pub loss_target: Option<f64>,
}

impl TrainArgs {
    /// Flags over config over defaults, validated.
    pub fn resolve(&self, cfg: &RunConfig, seed: u64) -> Result<TrainConfig, UsageError> {
        let d = TrainConfig::default();
        let c = TrainConfig {
            embed_dim: self.embed_dim.or(cfg.embed_dim).unwrap_or(d.embed_dim),
            ffn_dim: self.ffn_dim.or(cfg.ffn_dim).unwrap_or(d.ffn_dim),
            max_input_len: self.max_input_len.or(cfg.max_input_len).unwrap_or(d.max_input_len),
            max_target_len: self.max_target_len.or(cfg.max_target_len).unwrap_or(d.max_target_len),
            learning_rate: self.learning_rate.or(cfg.learning_rate).unwrap_or(d.learning_rate),
            beta1: self.beta1.or(cfg.beta1).unwrap_or(d.beta1),
            beta2: self.beta2.or(cfg.beta2).unwrap_or(d.beta2),
            eps: self.eps.or(cfg.eps).unwrap_or(d.eps),
            batch_size: self.batch_size.or(cfg.batch_size).unwrap_or(d.batch_size),
            epochs: self.epochs.or(cfg.epochs).unwrap_or(d.epochs),
            mix_ratio: self.mix_ratio.or(cfg.mix_ratio).unwrap_or(d.mix_ratio),
            index_chunks: self.index_chunks.or(cfg.index_chunks).unwrap_or(d.index_chunks),
            seed,
        };
        c.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(c)
    }

    pub fn loss_target(&self, cfg: &RunConfig) -> Result<Option<f64>, UsageError> {
        match self.loss_target.or(cfg.loss_target) {
            Some(t) if !t.is_finite() || t < 0.0 => Err(UsageError(format!("loss target out of range: {t}"))),
            t => Ok(t),
        }
    }
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<(RunConfig, PathBuf, u64), UsageError> {
        let cfg = RunConfig::load(self.config.as_deref())?;
        let out = self.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("run"));
        let seed = self.seed.or(cfg.seed).unwrap_or(0);
        Ok((cfg, out, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epochs": 3, "epoch": 4}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"epochs": 3, "strategy": "direct"}"#).unwrap();
        assert_eq!(c.epochs, Some(3));
    }

    #[test]
    fn flags_override_config() {
        let cfg = RunConfig {
            epochs: Some(3),
            batch_size: Some(4),
            ..Default::default()
        };
        let flags = TrainArgs {
            epochs: Some(9),
            ..Default::default()
        };
        let t = flags.resolve(&cfg, 5).unwrap();
        assert_eq!((t.epochs, t.batch_size, t.seed), (9, 4, 5));
        assert_eq!(t.embed_dim, TrainConfig::default().embed_dim);
        let bad = TrainArgs {
            batch_size: Some(0),
            ..Default::default()
        };
        assert!(bad.resolve(&cfg, 0).is_err());
    }
}
