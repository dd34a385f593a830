//! Scoring predicted images against ground truth and the leave-last-out
//! evaluation protocol over a corpus.
//!
//! The match metric is the Pearson correlation over pixels, reported as
//! `100 * max(0, r)` percent: bounded, invariant to the gain and offset
//! introduced by denormalization, and symmetric. RMSE rides along for
//! transparency.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Scope};
use crate::dataset::{write_pgm, Corpus, SubjectSequence};
use crate::imageproc::{self, ImageTensor};
use crate::pipeline::{self, FittedModel, LoadedSubject};
use crate::predictor::{self, TrainConfig, TrainPair};
use crate::{Error, Result};

/// Similarity between a predicted and an actual image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    /// `100 * max(0, correlation)`.
    pub percent: f64,
    /// Pearson correlation over pixels; 0 when either image is constant.
    pub correlation: f64,
    pub rmse: f64,
}

/// Pixel-correlation match score. Both images must share dimensions.
pub fn match_score(predicted: &ImageTensor, actual: &ImageTensor) -> Result<MatchScore> {
    if predicted.width() != actual.width() || predicted.height() != actual.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            predicted.width(),
            predicted.height(),
            actual.width(),
            actual.height()
        )));
    }
    let n = predicted.data().len() as f64;
    let mean_p = predicted.data().iter().sum::<f64>() / n;
    let mean_a = actual.data().iter().sum::<f64>() / n;
    let mut spa = 0.0;
    let mut spp = 0.0;
    let mut saa = 0.0;
    let mut sq = 0.0;
    for (p, a) in predicted.data().iter().zip(actual.data()) {
        let dp = p - mean_p;
        let da = a - mean_a;
        spa += dp * da;
        spp += dp * dp;
        saa += da * da;
        let diff = p - a;
        sq += diff * diff;
    }
    let sigma_p = (spp / n).sqrt();
    let sigma_a = (saa / n).sqrt();
    let correlation = if sigma_p <= 1e-12 || sigma_a <= 1e-12 {
        0.0
    } else {
        ((spa / n) / (sigma_p * sigma_a)).clamp(-1.0, 1.0)
    };
    Ok(MatchScore {
        percent: 100.0 * correlation.max(0.0),
        correlation,
        rmse: (sq / n).sqrt(),
    })
}

/// Outcome for one subject. Field names are the report's wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: String,
    pub percent: f64,
    pub correlation: f64,
    pub rmse: f64,
    pub predicted_path: String,
    pub actual_path: String,
}

/// Corpus-level evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub seed: u64,
    pub mean_percent: f64,
    pub min_percent: f64,
    pub max_percent: f64,
    pub subjects: Vec<SubjectReport>,
    /// Subjects with sequences too short to evaluate.
    pub skipped: Vec<String>,
    pub training_pairs_per_subject: BTreeMap<String, usize>,
}

/// Evaluate one subject against a fitted pipeline: hold out the last image,
/// predict it from the `k` preceding ones, score the prediction. When
/// `out_dir` is given the predicted and actual images are written as PGM.
pub fn evaluate_subject(
    seq: &SubjectSequence,
    fitted: &FittedModel,
    cfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<SubjectReport> {
    let loaded = pipeline::load_subject(seq, cfg)?;
    evaluate_loaded(&loaded, fitted, cfg, out_dir)
}

pub(crate) fn evaluate_loaded(
    subj: &LoadedSubject,
    fitted: &FittedModel,
    cfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<SubjectReport> {
    let k = cfg.window_k;
    let m = subj.tensors.len();
    if m < k + 1 {
        return Err(Error::SequenceTooShort(format!(
            "subject {}: {m} images, need at least {}",
            subj.subject_id,
            k + 1
        )));
    }
    let target_idx = m - 1;
    let window = pipeline::eval_window_range(m, k);

    let window_gfvs: Vec<Vec<f64>> = subj.spectra[window.clone()]
        .iter()
        .map(|s| crate::features::project(&fitted.basis, s))
        .collect::<Result<_>>()?;

    let predicted_gfv = if cfg.refine_on_target && fitted.basis.rank > 0 {
        refine_and_predict(subj, fitted, cfg, &window_gfvs, target_idx)?
    } else {
        pipeline::predict_window(fitted, &window_gfvs)?
    };
    let predicted = pipeline::gfv_to_tensor(&predicted_gfv, &fitted.basis, cfg)?;
    let actual = &subj.tensors[target_idx];
    let score = match_score(&predicted, actual)?;

    let (predicted_path, actual_path) = match out_dir {
        Some(dir) => {
            // display parameters come from the newest window image; nothing
            // from the target side is available at prediction time
            let pred_img = imageproc::denormalize(&predicted, &subj.norms[window.end - 1]);
            let act_img = imageproc::denormalize(actual, &subj.norms[target_idx]);
            let pred_path = dir.join(format!("{}_predicted.pgm", subj.subject_id));
            let act_path = dir.join(format!("{}_actual.pgm", subj.subject_id));
            write_pgm(&pred_path, &pred_img)?;
            write_pgm(&act_path, &act_img)?;
            (
                pred_path.to_string_lossy().into_owned(),
                act_path.to_string_lossy().into_owned(),
            )
        }
        None => (String::new(), String::new()),
    };

    Ok(SubjectReport {
        subject: subj.subject_id.clone(),
        percent: score.percent,
        correlation: score.correlation,
        rmse: score.rmse,
        predicted_path,
        actual_path,
    })
}

/// The literal feedback protocol: clone the model, fine-tune it on the
/// (window, held-out target) pair, then predict.
fn refine_and_predict(
    subj: &LoadedSubject,
    fitted: &FittedModel,
    cfg: &PipelineConfig,
    window_gfvs: &[Vec<f64>],
    target_idx: usize,
) -> Result<Vec<f64>> {
    let model = fitted
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidArtifact("fitted pipeline has no predictor model".into()))?;
    let target_gfv = crate::features::project(&fitted.basis, &subj.spectra[target_idx])?;
    let scaled_window: Vec<Vec<f64>> = window_gfvs.iter().map(|g| fitted.scaler.scale(g)).collect();
    let pair = TrainPair {
        input: scaled_window.concat(),
        target: fitted.scaler.scale(&target_gfv),
    };
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    let (refined, _) = predictor::mlp_train(model, &[pair], &train_cfg)?;
    let out = predictor::predict_next(&refined, &scaled_window)?;
    Ok(fitted.scaler.unscale(&out))
}

/// Leave-last-out evaluation over a corpus: fit (per scope), train, then
/// score every eligible subject. Too-short subjects are skipped, not
/// failed. Reports are ordered by subject id.
pub fn evaluate_corpus(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<EvalReport> {
    cfg.validate()?;
    let loaded = pipeline::load_corpus(corpus, cfg)?;
    let k = cfg.window_k;
    let skipped: Vec<String> = loaded
        .iter()
        .filter(|s| s.tensors.len() < k + 1)
        .map(|s| s.subject_id.clone())
        .collect();
    let eligible: Vec<&LoadedSubject> =
        loaded.iter().filter(|s| s.tensors.len() > k).collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleSubjects);
    }

    let mut subjects = Vec::with_capacity(eligible.len());
    let mut pairs_per_subject = BTreeMap::new();
    match cfg.pca_scope {
        Scope::Corpus => {
            let outcome = pipeline::fit_and_train(&loaded, cfg, pipeline::training_len)?;
            for subj in &eligible {
                subjects.push(evaluate_loaded(subj, &outcome.fitted, cfg, out_dir)?);
            }
            pairs_per_subject.extend(
                outcome
                    .pairs_per_subject
                    .into_iter()
                    .filter(|(id, _)| eligible.iter().any(|s| &s.subject_id == id)),
            );
        }
        Scope::Subject => {
            for subj in &eligible {
                let one = std::slice::from_ref(*subj);
                let outcome = pipeline::fit_and_train(one, cfg, pipeline::training_len)?;
                subjects.push(evaluate_loaded(subj, &outcome.fitted, cfg, out_dir)?);
                pairs_per_subject.extend(outcome.pairs_per_subject);
            }
        }
    }

    let percents: Vec<f64> = subjects.iter().map(|s| s.percent).collect();
    let mean_percent = percents.iter().sum::<f64>() / percents.len() as f64;
    let min_percent = percents.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_percent = percents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    Ok(EvalReport {
        config: cfg.clone(),
        seed: cfg.seed,
        mean_percent,
        min_percent,
        max_percent,
        subjects,
        skipped,
        training_pairs_per_subject: pairs_per_subject,
    })
}

/// Human-readable rendering of a report.
pub fn format_text_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("leave-last-out evaluation\n");
    out.push_str(&format!(
        "subjects evaluated: {}   skipped: {}\n",
        report.subjects.len(),
        report.skipped.len()
    ));
    out.push_str(&format!(
        "match percent: mean {:.2}  min {:.2}  max {:.2}\n\n",
        report.mean_percent, report.min_percent, report.max_percent
    ));
    out.push_str("subject  percent  correlation     rmse\n");
    for s in &report.subjects {
        out.push_str(&format!(
            "{:>7}  {:>7.2}  {:>11.4}  {:>7.4}\n",
            s.subject, s.percent, s.correlation, s.rmse
        ));
    }
    if !report.skipped.is_empty() {
        out.push_str(&format!("\nskipped (too short): {}\n", report.skipped.join(", ")));
    }
    out
}
