use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::CorruptionMode;
use crate::error::{LoclError, Result};
use crate::ordering::OrderingVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Conv,
    Dense,
}

impl std::str::FromStr for EncoderKind {
    type Err = LoclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(EncoderKind::Conv),
            "dense" => Ok(EncoderKind::Dense),
            other => Err(LoclError::invalid(format!("unknown encoder kind {other:?}"))),
        }
    }
}

/// Pretraining hyper-parameters. Serialized as TOML with these exact keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub latent_dim: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub mask_p: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub kernel_size: usize,
    pub channel_plan: Vec<usize>,
    pub overlap_fraction: f64,
    pub ordering_variant: OrderingVariant,
    pub encoder_kind: EncoderKind,
    pub seed: u64,
    pub corruption: CorruptionMode,
    /// Share of pretraining rows held out for early stopping.
    pub validation_fraction: f64,
    /// Minimum validation improvement that resets patience.
    pub min_delta: f64,
    pub leaky_slope: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            latent_dim: 64,
            alpha: 1.0,
            lambda: 0.005,
            mask_p: 0.3,
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 10,
            kernel_size: 3,
            channel_plan: vec![16, 32, 64],
            overlap_fraction: 0.0,
            ordering_variant: OrderingVariant::Mst,
            encoder_kind: EncoderKind::Conv,
            seed: 0,
            corruption: CorruptionMode::Marginal,
            validation_fraction: 0.1,
            min_delta: 1e-4,
            leaky_slope: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LoclError::Config(msg));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.latent_dim == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("latent_dim, max_epochs and patience must be positive".into());
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.channel_plan.is_empty() || self.channel_plan.contains(&0) {
            return bad(format!("invalid channel_plan {:?}", self.channel_plan));
        }
        if !(0.0..1.0).contains(&self.mask_p) {
            return bad(format!("mask_p {} outside [0, 1)", self.mask_p));
        }
        if !(0.0..=0.5).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction {} outside [0, 0.5]", self.overlap_fraction));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction {} outside [0, 0.5)",
                self.validation_fraction
            ));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("min_delta", self.min_delta),
            ("leaky_slope", self.leaky_slope),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Number of 2x pooling stages in the conv encoder.
    pub fn pool_stages(&self) -> usize {
        self.channel_plan.len()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LoclError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| LoclError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LoclError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("mask_p = 0.3"));
        assert!(text.contains("ordering_variant = \"mst\""));
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = TrainConfig::from_toml("alpha = 0.5\nencoder_kind = \"dense\"\n").unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.encoder_kind, EncoderKind::Dense);
        assert_eq!(cfg.batch_size, 128);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(TrainConfig::from_toml("mask_p = 1.0").is_err());
        assert!(TrainConfig::from_toml("kernel_size = 4").is_err());
        assert!(TrainConfig::from_toml("latent_dim = 0").is_err());
        assert!(TrainConfig::from_toml("unknown_key = 1").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = TrainConfig::default();
        let b = TrainConfig { alpha: 2.0, ..a.clone() };
        assert_eq!(a.fingerprint(), TrainConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
