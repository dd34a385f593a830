//! Synthetic aging-sequence generator: deterministic stand-in corpora for
//! exercising the pipeline end to end without a face database.
//!
//! Each subject gets two random smooth fields `A` and `B` (low-frequency
//! sinusoid mixtures); image `t` is the blend `(1 - a_t) A + a_t B` with
//! `a_t = t / (length - 1)`, quantized to 8 bits. Pixel dynamics are affine
//! in `t`, which makes next-feature prediction a learnable map.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_pgm, RawImage};
use crate::{Error, Result};

pub const FIXTURE_SIZE: usize = 64;
/// Ages start here and advance by three years per image.
const FIRST_AGE: u32 = 2;
const AGE_STEP: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSummary {
    pub subjects: usize,
    pub length: usize,
    pub files: usize,
}

/// Plane-wave frequencies shared by all fields. Random amplitudes and
/// phases vary per field, so every field is a generic point of one
/// low-dimensional function space (five frequencies span ten dimensions
/// plus the constant) and the default feature rank covers the whole
/// corpus.
const WAVE_FREQS: [(f64, f64); 5] = [(0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (2.0, 1.0), (1.0, 2.0)];

/// Mixture of low-frequency plane waves, rescaled to [0, 1].
fn smooth_field(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = FIXTURE_SIZE;
    let mut waves = Vec::with_capacity(WAVE_FREQS.len());
    for (fx, fy) in WAVE_FREQS {
        let amp: f64 = rng.gen_range(0.5..1.0);
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        waves.push((fx, fy, amp, phase));
    }
    let mut field = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut v = 0.0;
            for (fx, fy, amp, phase) in &waves {
                v += amp * (2.0 * PI * (fx * x as f64 + fy * y as f64) / n as f64 + phase).sin();
            }
            field[y * n + x] = v;
        }
    }
    let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        for v in &mut field {
            *v = (*v - lo) / span;
        }
    } else {
        field.fill(0.5);
    }
    field
}

/// Write `subjects * length` PGM files named `<id>A<age>.pgm` under
/// `out_dir`. The same seed always produces byte-identical files.
pub fn make_fixture(
    out_dir: &Path,
    subjects: usize,
    length: usize,
    seed: u64,
) -> Result<FixtureSummary> {
    if subjects == 0 || length == 0 {
        return Err(Error::InvalidConfig(
            "fixture needs at least one subject and one image".into(),
        ));
    }
    let max_age = FIRST_AGE + AGE_STEP * (length as u32 - 1);
    if max_age > 120 {
        return Err(Error::InvalidConfig(format!(
            "length {length} would push ages past 120"
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut files = 0;
    for s in 0..subjects {
        let a = smooth_field(&mut rng);
        let b = smooth_field(&mut rng);
        for t in 0..length {
            let alpha = if length > 1 {
                t as f64 / (length - 1) as f64
            } else {
                0.0
            };
            let data: Vec<u8> = a
                .iter()
                .zip(&b)
                .map(|(av, bv)| {
                    let v = (1.0 - alpha) * av + alpha * bv;
                    (255.0 * v).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            let img = RawImage::new(FIXTURE_SIZE, FIXTURE_SIZE, data)?;
            let age = FIRST_AGE + AGE_STEP * t as u32;
            let name = format!("{:03}A{:02}.pgm", s + 1, age);
            write_pgm(&out_dir.join(name), &img)?;
            files += 1;
        }
    }
    Ok(FixtureSummary {
        subjects,
        length,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;

    #[test]
    fn fixture_is_scannable_with_expected_counts() {
        let dir = tempfile::tempdir().unwrap();
        let summary = make_fixture(dir.path(), 5, 6, 1).unwrap();
        assert_eq!(summary.files, 30);
        let corpus = dataset::scan_corpus(dir.path()).unwrap();
        assert_eq!(corpus.sequences.len(), 5);
        for seq in &corpus.sequences {
            let ages: Vec<u32> = seq.records.iter().map(|r| r.age_years).collect();
            assert_eq!(ages, vec![2, 5, 8, 11, 14, 17]);
        }
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        make_fixture(dir_a.path(), 2, 3, 7).unwrap();
        make_fixture(dir_b.path(), 2, 3, 7).unwrap();
        for name in ["001A02.pgm", "001A05.pgm", "002A08.pgm"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        make_fixture(dir_a.path(), 1, 1, 1).unwrap();
        make_fixture(dir_b.path(), 1, 1, 2).unwrap();
        let a = std::fs::read(dir_a.path().join("001A02.pgm")).unwrap();
        let b = std::fs::read(dir_b.path().join("001A02.pgm")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn blend_is_affine_between_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        make_fixture(dir.path(), 1, 3, 9).unwrap();
        let first = dataset::load_pgm(&dir.path().join("001A02.pgm")).unwrap();
        let mid = dataset::load_pgm(&dir.path().join("001A05.pgm")).unwrap();
        let last = dataset::load_pgm(&dir.path().join("001A08.pgm")).unwrap();
        // midpoint equals the average of the endpoints up to quantization
        for ((f, m), l) in first.data().iter().zip(mid.data()).zip(last.data()) {
            let expect = (*f as f64 + *l as f64) / 2.0;
            assert!((*m as f64 - expect).abs() <= 1.0);
        }
    }

    #[test]
    fn absurd_length_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(make_fixture(dir.path(), 1, 50, 0).is_err());
    }
}
