//! Glue between the stages: image-to-feature transforms, feature
//! standardization around the predictor, and corpus-level fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dataset::{load_pgm, Corpus, FaceRecord, RawImage, SubjectSequence};
use crate::features::{self, PcaBasis};
use crate::imageproc::{self, ImageTensor, NormParams, STD_EPS};
use crate::predictor::{self, LayerSpec, MlpModel, TrainConfig, TrainPair, TrainReport};
use crate::spectral;
use crate::{Error, Result};

/// Standardization applied to feature vectors before the predictor sees
/// them and inverted on the way out. Raw projections carry the spectra's
/// numeric range (hundreds), which would pin the tanh hidden layer at
/// saturation and stall training. Centering is per dimension; the scale is
/// a single global factor (the RMS deviation over all dimensions) so the
/// components keep their natural relative weight in the squared-error loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl FeatureScaler {
    pub fn identity(rank: usize) -> Self {
        Self {
            mean: vec![0.0; rank],
            scale: 1.0,
        }
    }

    /// Per-dimension mean and the global RMS deviation over `gfvs`.
    pub fn fit(gfvs: &[Vec<f64>]) -> Self {
        let rank = gfvs.first().map_or(0, |g| g.len());
        let n = gfvs.len().max(1) as f64;
        let mut mean = vec![0.0; rank];
        for g in gfvs {
            for (m, x) in mean.iter_mut().zip(g) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut total = 0.0;
        for g in gfvs {
            for (x, m) in g.iter().zip(&mean) {
                let d = x - m;
                total += d * d;
            }
        }
        let scale = (total / (n * rank.max(1) as f64)).sqrt();
        Self { mean, scale }
    }

    pub fn scale(&self, g: &[f64]) -> Vec<f64> {
        let s = self.scale.max(STD_EPS);
        g.iter().zip(&self.mean).map(|(x, m)| (x - m) / s).collect()
    }

    pub fn unscale(&self, g: &[f64]) -> Vec<f64> {
        let s = self.scale.max(STD_EPS);
        g.iter().zip(&self.mean).map(|(x, m)| x * s + m).collect()
    }
}

/// A fitted pipeline: basis, feature scaler and (unless the basis is
/// degenerate) the trained predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub basis: PcaBasis,
    pub scaler: FeatureScaler,
    pub model: Option<MlpModel>,
}

/// Resize to the working resolution and z-score.
pub fn image_to_tensor(raw: &RawImage, size: usize) -> (ImageTensor, NormParams) {
    let resized = imageproc::resize_bilinear(raw, size, size);
    imageproc::normalize(&resized)
}

/// Forward spectral transform flattened to a real vector.
pub fn tensor_to_spectral(tensor: &ImageTensor, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let grid = spectral::stft_forward(tensor, cfg.stft()?)?;
    Ok(spectral::grid_to_vector(&grid))
}

/// Invert a flattened spectrum back to an image tensor at the working size.
pub fn spectral_to_tensor(vec: &[f64], cfg: &PipelineConfig) -> Result<ImageTensor> {
    let meta = spectral::grid_meta_for(cfg.image_size, cfg.image_size, cfg.stft()?)?;
    let grid = spectral::vector_to_grid(vec, &meta)?;
    spectral::stft_inverse(&grid)
}

/// Feature vector to image tensor: PCA reconstruction then inverse STFT.
pub fn gfv_to_tensor(g: &[f64], basis: &PcaBasis, cfg: &PipelineConfig) -> Result<ImageTensor> {
    let vec = features::reconstruct(basis, g)?;
    spectral_to_tensor(&vec, cfg)
}

/// One subject with every image loaded, normalized and transformed.
#[derive(Debug, Clone)]
pub struct LoadedSubject {
    pub subject_id: String,
    pub records: Vec<FaceRecord>,
    pub tensors: Vec<ImageTensor>,
    pub norms: Vec<NormParams>,
    pub spectra: Vec<Vec<f64>>,
}

pub fn load_subject(seq: &SubjectSequence, cfg: &PipelineConfig) -> Result<LoadedSubject> {
    let mut tensors = Vec::with_capacity(seq.records.len());
    let mut norms = Vec::with_capacity(seq.records.len());
    let mut spectra = Vec::with_capacity(seq.records.len());
    for rec in &seq.records {
        let raw = load_pgm(&rec.path)?;
        let (tensor, norm) = image_to_tensor(&raw, cfg.image_size);
        spectra.push(tensor_to_spectral(&tensor, cfg)?);
        tensors.push(tensor);
        norms.push(norm);
    }
    Ok(LoadedSubject {
        subject_id: seq.subject_id.clone(),
        records: seq.records.clone(),
        tensors,
        norms,
        spectra,
    })
}

pub fn load_corpus(corpus: &Corpus, cfg: &PipelineConfig) -> Result<Vec<LoadedSubject>> {
    corpus
        .sequences
        .iter()
        .map(|seq| load_subject(seq, cfg))
        .collect()
}

/// How many leading images of an `m`-image sequence participate in fitting
/// and training when the last image is the evaluation target: everything
/// but the target, except for minimum-length sequences (`m = k + 1`) where
/// the single possible training pair already ends on it.
pub fn training_len(m: usize, k: usize) -> usize {
    if m > k + 1 {
        m - 1
    } else {
        m
    }
}

/// Window that predicts the held-out last image: the `k` images preceding it.
pub fn eval_window_range(m: usize, k: usize) -> std::ops::Range<usize> {
    (m - 1 - k)..(m - 1)
}

/// Predict the feature vector following `window` (raw, unscaled GFVs).
/// A rank-0 basis bypasses the predictor and yields the empty vector,
/// which reconstructs to the basis mean.
pub fn predict_window(fitted: &FittedModel, window: &[Vec<f64>]) -> Result<Vec<f64>> {
    if fitted.basis.rank == 0 {
        return Ok(Vec::new());
    }
    let model = fitted
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidArtifact("fitted pipeline has no predictor model".into()))?;
    let scaled: Vec<Vec<f64>> = window.iter().map(|g| fitted.scaler.scale(g)).collect();
    let out = predictor::predict_next(model, &scaled)?;
    Ok(fitted.scaler.unscale(&out))
}

/// Result of fitting a corpus: the fitted pipeline, the training report
/// (absent for a degenerate basis) and per-subject pair counts.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub fitted: FittedModel,
    pub report: Option<TrainReport>,
    pub pairs_per_subject: BTreeMap<String, usize>,
}

/// Fit the basis, scaler and predictor over `subjects`.
///
/// `len_rule(m, k)` picks how many leading images of each eligible subject
/// (at least `k + 1` images) join the fit; shorter subjects contribute all
/// their images to the basis but no training pairs.
pub fn fit_and_train(
    subjects: &[LoadedSubject],
    cfg: &PipelineConfig,
    len_rule: fn(usize, usize) -> usize,
) -> Result<TrainOutcome> {
    let k = cfg.window_k;
    let mut fit_counts = Vec::with_capacity(subjects.len());
    let mut basis_samples: Vec<&[f64]> = Vec::new();
    for subj in subjects {
        let m = subj.spectra.len();
        let use_n = if m > k { len_rule(m, k) } else { m };
        fit_counts.push(use_n);
        for s in &subj.spectra[..use_n] {
            basis_samples.push(s);
        }
    }
    let basis = features::fit_pca(&basis_samples, cfg.pca_rank)?;

    let mut pairs_per_subject = BTreeMap::new();
    if basis.rank == 0 {
        for subj in subjects {
            pairs_per_subject.insert(subj.subject_id.clone(), 0);
        }
        return Ok(TrainOutcome {
            fitted: FittedModel {
                basis,
                scaler: FeatureScaler::identity(0),
                model: None,
            },
            report: None,
            pairs_per_subject,
        });
    }

    // project the images that participate in training, fit the scaler on them
    let mut train_gfvs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(subjects.len());
    let mut flat: Vec<Vec<f64>> = Vec::new();
    for (subj, &use_n) in subjects.iter().zip(&fit_counts) {
        let gfvs: Vec<Vec<f64>> = if subj.spectra.len() > k {
            subj.spectra[..use_n]
                .iter()
                .map(|s| features::project(&basis, s))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        flat.extend(gfvs.iter().cloned());
        train_gfvs.push(gfvs);
    }
    let scaler = FeatureScaler::fit(&flat);

    let mut pooled: Vec<TrainPair> = Vec::new();
    for (subj, gfvs) in subjects.iter().zip(&train_gfvs) {
        if gfvs.len() > k {
            let scaled: Vec<Vec<f64>> = gfvs.iter().map(|g| scaler.scale(g)).collect();
            let pairs = predictor::build_training_pairs(&scaled, k)?;
            pairs_per_subject.insert(subj.subject_id.clone(), pairs.len());
            pooled.extend(pairs);
        } else {
            pairs_per_subject.insert(subj.subject_id.clone(), 0);
        }
    }
    if pooled.is_empty() {
        return Err(Error::NoEligibleSubjects);
    }

    let n_in = k * basis.rank;
    let mut sizes = vec![n_in];
    sizes.extend(cfg.hidden_for(n_in));
    sizes.push(basis.rank);
    let spec = LayerSpec::new(sizes)?;
    let init = predictor::mlp_init(&spec, cfg.seed);
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    let (model, report) = predictor::mlp_train(&init, &pooled, &train_cfg)?;

    Ok(TrainOutcome {
        fitted: FittedModel {
            basis,
            scaler,
            model: Some(model),
        },
        report: Some(report),
        pairs_per_subject,
    })
}

/// Fit over full sequences (no hold-out); used by the `train` command.
/// Subject scope only makes sense for a single-subject corpus here, since
/// the artifact stores one model.
pub fn train_full(subjects: &[LoadedSubject], cfg: &PipelineConfig) -> Result<TrainOutcome> {
    if cfg.pca_scope == crate::config::Scope::Subject && subjects.len() != 1 {
        return Err(Error::InvalidConfig(
            "subject scope training requires a single-subject corpus; \
             use corpus scope or split the manifest"
                .into(),
        ));
    }
    fit_and_train(subjects, cfg, |m, _| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_len_rule() {
        assert_eq!(training_len(6, 3), 5, "long sequences drop the target");
        assert_eq!(training_len(5, 3), 4);
        assert_eq!(training_len(4, 3), 4, "minimum length keeps all images");
    }

    #[test]
    fn eval_window_precedes_target() {
        assert_eq!(eval_window_range(5, 3), 1..4);
        assert_eq!(eval_window_range(4, 3), 0..3);
        assert_eq!(eval_window_range(6, 3), 2..5);
    }

    #[test]
    fn scaler_round_trips_and_centers() {
        let gfvs = vec![vec![10.0, -5.0], vec![30.0, 5.0], vec![20.0, 0.0]];
        let scaler = FeatureScaler::fit(&gfvs);
        let g = vec![17.0, 3.0];
        let back = scaler.unscale(&scaler.scale(&g));
        for (a, b) in g.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let scaled: Vec<Vec<f64>> = gfvs.iter().map(|g| scaler.scale(g)).collect();
        for dim in 0..2 {
            let mean: f64 = scaled.iter().map(|g| g[dim]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
        }
        // global RMS of the scaled values is 1
        let total: f64 = scaled.iter().flatten().map(|v| v * v).sum();
        assert!((total / 6.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_scaler_survives_scaling() {
        let gfvs = vec![vec![4.0, 1.5], vec![4.0, 1.5]];
        let scaler = FeatureScaler::fit(&gfvs);
        let scaled = scaler.scale(&[4.0, 1.5]);
        assert!(scaled.iter().all(|&v| v == 0.0));
        let back = scaler.unscale(&scaled);
        assert!((back[0] - 4.0).abs() < 1e-12);
        assert!((back[1] - 1.5).abs() < 1e-12);
    }
}
