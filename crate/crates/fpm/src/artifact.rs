//! Versioned single-file persistence for a trained pipeline: config
//! snapshot, PCA basis, feature scaler, predictor model and the per-image
//! normalization registry, as one JSON document tagged `FPM1`. JSON floats
//! use the shortest round-trip decimal form, so load(save(x)) is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::features::PcaBasis;
use crate::pipeline::{FeatureScaler, FittedModel};
use crate::predictor::MlpModel;
use crate::spectral;
use crate::{Error, Result};

pub const ARTIFACT_FORMAT: &str = "FPM1";

/// Normalization parameters of one training image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormRecord {
    pub subject: String,
    pub age: u32,
    pub path: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactFile {
    pub format: String,
    pub config: PipelineConfig,
    pub basis: PcaBasis,
    pub scaler: FeatureScaler,
    pub model: Option<MlpModel>,
    pub norm_params: Vec<NormRecord>,
}

impl ArtifactFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let artifact: ArtifactFile = serde_json::from_str(&text)?;
        artifact.validate()?;
        Ok(artifact)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != ARTIFACT_FORMAT {
            return Err(Error::InvalidArtifact(format!(
                "format tag {:?}, expected {ARTIFACT_FORMAT:?}",
                self.format
            )));
        }
        self.config.validate()?;
        let meta = spectral::grid_meta_for(
            self.config.image_size,
            self.config.image_size,
            self.config.stft()?,
        )?;
        if self.basis.dim != meta.vector_len() {
            return Err(Error::InvalidArtifact(format!(
                "basis dim {} does not match the configured spectral length {}",
                self.basis.dim,
                meta.vector_len()
            )));
        }
        if self.basis.components.len() != self.basis.rank
            || self.basis.eigenvalues.len() != self.basis.rank
        {
            return Err(Error::InvalidArtifact("basis shape inconsistent".into()));
        }
        if self.scaler.mean.len() != self.basis.rank {
            return Err(Error::InvalidArtifact(
                "scaler length does not match basis rank".into(),
            ));
        }
        match &self.model {
            Some(model) => {
                if model.spec.n_in() != self.config.window_k * self.basis.rank
                    || model.spec.n_out() != self.basis.rank
                {
                    return Err(Error::InvalidArtifact(
                        "model widths do not match window and basis rank".into(),
                    ));
                }
            }
            None => {
                if self.basis.rank != 0 {
                    return Err(Error::InvalidArtifact(
                        "artifact with a usable basis is missing its model".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn fitted(&self) -> FittedModel {
        FittedModel {
            basis: self.basis.clone(),
            scaler: self.scaler.clone(),
            model: self.model.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features;
    use crate::pipeline::FeatureScaler;
    use crate::predictor::{self, LayerSpec};

    fn sample_artifact() -> ArtifactFile {
        let cfg = PipelineConfig::default();
        let meta = spectral::grid_meta_for(64, 64, cfg.stft().unwrap()).unwrap();
        let d = meta.vector_len();
        // two synthetic samples give a rank-1 basis of the right dimension
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        for i in 0..d {
            a[i] = (i % 7) as f64 * 0.1;
            b[i] = (i % 5) as f64 * 0.2 - 0.3;
        }
        let basis = features::fit_pca(&[&a, &b], 1).unwrap();
        let spec = LayerSpec::new(vec![cfg.window_k * basis.rank, 4, basis.rank]).unwrap();
        let model = predictor::mlp_init(&spec, cfg.seed);
        ArtifactFile {
            format: ARTIFACT_FORMAT.into(),
            config: cfg,
            scaler: FeatureScaler::identity(basis.rank),
            basis,
            model: Some(model),
            norm_params: vec![NormRecord {
                subject: "001".into(),
                age: 2,
                path: "001A02.pgm".into(),
                mean: 127.25,
                std: 31.5,
            }],
        }
    }

    #[test]
    fn save_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.json");
        let artifact = sample_artifact();
        artifact.save(&path).unwrap();
        let loaded = ArtifactFile::load(&path).unwrap();
        assert_eq!(loaded, artifact, "every numeric field must round-trip exactly");
    }

    #[test]
    fn save_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let artifact = sample_artifact();
        artifact.save(&a).unwrap();
        artifact.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.json");
        let mut artifact = sample_artifact();
        artifact.format = "FPM9".into();
        let mut text = serde_json::to_string(&artifact).unwrap();
        text.push('\n');
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            ArtifactFile::load(&path),
            Err(Error::InvalidArtifact(_))
        ));
    }

    #[test]
    fn inconsistent_model_is_rejected() {
        let mut artifact = sample_artifact();
        let spec = LayerSpec::new(vec![7, 7]).unwrap();
        artifact.model = Some(predictor::mlp_init(&spec, 0));
        assert!(artifact.validate().is_err());
    }
}
