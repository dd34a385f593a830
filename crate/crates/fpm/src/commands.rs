//! Command implementations behind the CLI binary. Each returns a summary
//! struct; the binary does the printing.

use std::fs;
use std::path::{Path, PathBuf};

use crate::artifact::{ArtifactFile, NormRecord, ARTIFACT_FORMAT};
use crate::config::PipelineConfig;
use crate::dataset::{self, Corpus};
use crate::evalmatch::{self, EvalReport};
use crate::fixture::{self, FixtureSummary};
use crate::imageproc;
use crate::pipeline;
use crate::predictor::TrainReport;
use crate::{Error, Result};

/// Accept either a corpus directory or a manifest file.
pub fn load_corpus_arg(path: &Path) -> Result<Corpus> {
    if path.is_dir() {
        dataset::scan_corpus(path)
    } else {
        dataset::load_manifest(path)
    }
}

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub subjects: usize,
    pub images: usize,
    pub skipped: Vec<String>,
    pub manifest: PathBuf,
}

/// Scan a directory and write its manifest.
pub fn cmd_ingest(root: &Path, out_manifest: &Path) -> Result<IngestSummary> {
    let corpus = dataset::scan_corpus(root)?;
    dataset::write_manifest(&corpus, out_manifest)?;
    Ok(IngestSummary {
        subjects: corpus.sequences.len(),
        images: corpus.total_images(),
        skipped: corpus.skipped.clone(),
        manifest: out_manifest.to_path_buf(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub subjects: usize,
    pub images: usize,
    pub pairs: usize,
    pub report: Option<TrainReport>,
    pub artifact: PathBuf,
}

/// Full fit over a corpus: normalize, transform, fit the basis, build
/// pairs, train, and persist everything as an artifact file.
pub fn cmd_train(corpus_path: &Path, cfg: &PipelineConfig, out_artifact: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let corpus = load_corpus_arg(corpus_path)?;
    let loaded = pipeline::load_corpus(&corpus, cfg)?;
    let outcome = pipeline::train_full(&loaded, cfg)?;

    let norm_params: Vec<NormRecord> = loaded
        .iter()
        .flat_map(|subj| {
            subj.records
                .iter()
                .zip(&subj.norms)
                .map(|(rec, norm)| NormRecord {
                    subject: rec.subject_id.clone(),
                    age: rec.age_years,
                    path: rec.path.to_string_lossy().into_owned(),
                    mean: norm.mean,
                    std: norm.std,
                })
        })
        .collect();

    // snapshot the resolved hidden widths so predict/evaluate rebuild the
    // exact same shape
    let mut config = cfg.clone();
    if let Some(model) = &outcome.fitted.model {
        let sizes = &model.spec.sizes;
        config.hidden_layers = Some(sizes[1..sizes.len() - 1].to_vec());
    }

    let artifact = ArtifactFile {
        format: ARTIFACT_FORMAT.into(),
        config,
        basis: outcome.fitted.basis.clone(),
        scaler: outcome.fitted.scaler.clone(),
        model: outcome.fitted.model.clone(),
        norm_params,
    };
    artifact.save(out_artifact)?;

    Ok(TrainSummary {
        subjects: loaded.len(),
        images: loaded.iter().map(|s| s.tensors.len()).sum(),
        pairs: outcome.pairs_per_subject.values().sum(),
        report: outcome.report,
        artifact: out_artifact.to_path_buf(),
    })
}

/// Run the prediction path end to end: `k` input images in, one PGM out.
pub fn cmd_predict(artifact_path: &Path, inputs: &[PathBuf], out_pgm: &Path) -> Result<PathBuf> {
    let artifact = ArtifactFile::load(artifact_path)?;
    let cfg = &artifact.config;
    let k = cfg.window_k;
    if inputs.len() != k {
        return Err(Error::LengthMismatch(format!(
            "expected {k} input images, got {}",
            inputs.len()
        )));
    }
    let mut gfvs = Vec::with_capacity(k);
    let mut last_norm = None;
    for path in inputs {
        let raw = dataset::load_pgm(path)?;
        let (tensor, norm) = pipeline::image_to_tensor(&raw, cfg.image_size);
        let spectrum = pipeline::tensor_to_spectral(&tensor, cfg)?;
        gfvs.push(crate::features::project(&artifact.basis, &spectrum)?);
        last_norm = Some(norm);
    }
    let fitted = artifact.fitted();
    let predicted_gfv = pipeline::predict_window(&fitted, &gfvs)?;
    let tensor = pipeline::gfv_to_tensor(&predicted_gfv, &artifact.basis, cfg)?;
    let image = imageproc::denormalize(&tensor, &last_norm.expect("k >= 1"));
    dataset::write_pgm(out_pgm, &image)?;
    Ok(out_pgm.to_path_buf())
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub report: EvalReport,
    pub json_path: PathBuf,
    pub text_path: PathBuf,
    pub images_dir: PathBuf,
}

/// Leave-last-out evaluation; writes `<out>.json`, `<out>.txt` and the
/// predicted/actual images under `<out>_images/`.
pub fn cmd_evaluate(corpus_path: &Path, cfg: &PipelineConfig, out_base: &Path) -> Result<EvaluateSummary> {
    let corpus = load_corpus_arg(corpus_path)?;
    let base = out_base.with_extension("");
    let images_dir = PathBuf::from(format!("{}_images", base.display()));
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let report = evalmatch::evaluate_corpus(&corpus, cfg, Some(&images_dir))?;

    let json_path = base.with_extension("json");
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let text_path = base.with_extension("txt");
    fs::write(&text_path, evalmatch::format_text_report(&report))
        .map_err(|e| Error::io(&text_path, e))?;

    Ok(EvaluateSummary {
        report,
        json_path,
        text_path,
        images_dir,
    })
}

pub fn cmd_make_fixture(
    out_dir: &Path,
    subjects: usize,
    length: usize,
    seed: u64,
) -> Result<FixtureSummary> {
    fixture::make_fixture(out_dir, subjects, length, seed)
}
