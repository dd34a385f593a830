//! Pipeline configuration: one struct covering every stage, loadable from a
//! JSON file. Unknown keys are a hard error so typos cannot silently fall
//! back to defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::spectral::StftConfig;
use crate::{Error, Result};

/// Whether the feature basis (and predictor training) pools the whole
/// corpus or stays within one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Corpus,
    Subject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Working resolution; every image is resized to this square.
    pub image_size: usize,
    pub stft_block: usize,
    pub stft_hop: usize,
    /// Requested number of PCA components (clamped by the sample count).
    pub pca_rank: usize,
    pub pca_scope: Scope,
    /// Window length: how many consecutive feature vectors feed one
    /// prediction.
    pub window_k: usize,
    /// Hidden layer widths; `None` resolves to `max(16, 2 * n_in / 3)`.
    pub hidden_layers: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Opt-in: fine-tune on the held-out target before scoring it (the
    /// literal feedback protocol). Off by default to keep the evaluation
    /// target out of training.
    pub refine_on_target: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            stft_block: 16,
            stft_hop: 8,
            pca_rank: 20,
            pca_scope: Scope::Corpus,
            window_k: 3,
            hidden_layers: None,
            learning_rate: 0.01,
            epochs: 5000,
            seed: 42,
            refine_on_target: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let stft = StftConfig::new(self.stft_block, self.stft_hop)?;
        if self.image_size < stft.block() {
            return Err(Error::InvalidConfig(format!(
                "image size {} is smaller than the stft block {}",
                self.image_size,
                stft.block()
            )));
        }
        if self.pca_rank == 0 {
            return Err(Error::InvalidConfig("pca rank must be >= 1".into()));
        }
        if self.window_k == 0 {
            return Err(Error::InvalidConfig("window size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if let Some(hidden) = &self.hidden_layers {
            if hidden.contains(&0) {
                return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn stft(&self) -> Result<StftConfig> {
        StftConfig::new(self.stft_block, self.stft_hop)
    }

    /// Hidden widths for a given input width, applying the default rule
    /// when none are configured.
    pub fn hidden_for(&self, n_in: usize) -> Vec<usize> {
        match &self.hidden_layers {
            Some(h) => h.clone(),
            None => vec![(2 * n_in / 3).max(16)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"image_size": 32, "pca_rnk": 5}"#).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Json(_))));
    }

    #[test]
    fn partial_file_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"image_size": 32, "pca_rank": 5}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.image_size, 32);
        assert_eq!(cfg.pca_rank, 5);
        assert_eq!(cfg.epochs, 5000);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad = [
            PipelineConfig {
                stft_hop: 4,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                image_size: 8,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                learning_rate: 0.0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                hidden_layers: Some(vec![8, 0]),
                ..PipelineConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hidden_default_rule() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.hidden_for(60), vec![40]);
        assert_eq!(cfg.hidden_for(6), vec![16]);
        let with = PipelineConfig {
            hidden_layers: Some(vec![32, 8]),
            ..PipelineConfig::default()
        };
        assert_eq!(with.hidden_for(60), vec![32, 8]);
    }
}
