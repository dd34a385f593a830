//! Corpus ingestion: age-encoded filename parsing, binary PGM image I/O,
//! and age-ordered per-subject sequences.
//!
//! Record names follow the FG-NET convention `<subject>A<age><variant>.<ext>`,
//! e.g. `001A02.JPG` or `052a21b.pgm`. A `manifest.json` file in the corpus
//! root overrides filename parsing entirely.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension in {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// One dated face image of one subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceRecord {
    pub subject_id: String,
    pub age_years: u32,
    pub path: PathBuf,
}

/// All records of one subject, ages strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSequence {
    pub subject_id: String,
    pub records: Vec<FaceRecord>,
}

/// A scanned or manifest-loaded corpus, sequences sorted by subject id.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sequences: Vec<SubjectSequence>,
    pub manifest_path: Option<PathBuf>,
    /// File names that did not parse as records and were skipped.
    pub skipped: Vec<String>,
}

impl Corpus {
    pub fn total_images(&self) -> usize {
        self.sequences.iter().map(|s| s.records.len()).sum()
    }
}

const MAX_AGE: u32 = 120;

/// Parse a record base name of the form `<digits>A<digits><optional letter>.<ext>`.
///
/// The `A` separator is case-insensitive and the extension is ignored.
/// Returns the subject token (leading zeros preserved) and the age.
pub fn parse_record_name(filename: &str) -> Result<(String, u32)> {
    let err = || Error::NameParse(filename.to_string());
    let (stem, ext) = filename.rsplit_once('.').ok_or_else(err)?;
    if stem.is_empty() || ext.is_empty() {
        return Err(err());
    }
    let chars: Vec<char> = stem.chars().collect();
    let mut i = 0;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i == 0 {
        return Err(err());
    }
    let subject: String = chars[..i].iter().collect();
    if i >= chars.len() || !matches!(chars[i], 'a' | 'A') {
        return Err(err());
    }
    i += 1;
    let age_start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i == age_start {
        return Err(err());
    }
    let age: u32 = chars[age_start..i]
        .iter()
        .collect::<String>()
        .parse()
        .map_err(|_| err())?;
    match chars.len() - i {
        0 => {}
        1 if chars[i].is_ascii_alphabetic() => {}
        _ => return Err(err()),
    }
    if age > MAX_AGE {
        return Err(err());
    }
    Ok((subject, age))
}

/// Scan a directory into a corpus.
///
/// If `root_dir/manifest.json` exists it is authoritative and filename
/// parsing is skipped. Otherwise every file whose name parses becomes a
/// record; unparsable names are collected in `skipped`. A duplicate
/// (subject, age) keeps the lexicographically smallest file name.
pub fn scan_corpus(root_dir: &Path) -> Result<Corpus> {
    let manifest = root_dir.join("manifest.json");
    if manifest.is_file() {
        return load_manifest(&manifest);
    }
    let entries = fs::read_dir(root_dir).map_err(|e| Error::io(root_dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root_dir, e))?;
        if entry.path().is_file() {
            if let Some(name) = entry.file_name().to_str() {
                names.push(name.to_string());
            }
        }
    }
    // read_dir order is platform-dependent; sort for reproducible output
    names.sort();
    let mut skipped = Vec::new();
    let mut records = Vec::new();
    for name in names {
        match parse_record_name(&name) {
            Ok((subject, age)) => records.push(FaceRecord {
                subject_id: subject,
                age_years: age,
                path: root_dir.join(&name),
            }),
            Err(_) => skipped.push(name),
        }
    }
    build_corpus(records, None, skipped, root_dir)
}

fn file_name_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn build_corpus(
    records: Vec<FaceRecord>,
    manifest_path: Option<PathBuf>,
    skipped: Vec<String>,
    origin: &Path,
) -> Result<Corpus> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus(origin.to_path_buf()));
    }
    let mut by_subject: BTreeMap<String, BTreeMap<u32, FaceRecord>> = BTreeMap::new();
    for rec in records {
        let ages = by_subject.entry(rec.subject_id.clone()).or_default();
        match ages.entry(rec.age_years) {
            Entry::Vacant(slot) => {
                slot.insert(rec);
            }
            Entry::Occupied(mut slot) => {
                let kept = file_name_of(&slot.get().path);
                let candidate = file_name_of(&rec.path);
                if candidate < kept {
                    warn!(
                        "duplicate record for subject {} age {}: keeping {candidate}, dropping {kept}",
                        rec.subject_id, rec.age_years
                    );
                    slot.insert(rec);
                } else {
                    warn!(
                        "duplicate record for subject {} age {}: keeping {kept}, dropping {candidate}",
                        rec.subject_id, rec.age_years
                    );
                }
            }
        }
    }
    let sequences = by_subject
        .into_iter()
        .map(|(subject_id, ages)| SubjectSequence {
            subject_id,
            records: ages.into_values().collect(),
        })
        .collect();
    Ok(Corpus {
        sequences,
        manifest_path,
        skipped,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    records: Vec<ManifestRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRecord {
    subject: String,
    age: u32,
    path: String,
}

/// Load a corpus from a JSON manifest. Relative record paths are resolved
/// against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: ManifestFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::new();
    for r in parsed.records {
        if r.subject.is_empty() {
            return Err(Error::InvalidManifest("empty subject id".into()));
        }
        if r.age > MAX_AGE {
            return Err(Error::InvalidManifest(format!(
                "age {} out of range for subject {}",
                r.age, r.subject
            )));
        }
        let p = PathBuf::from(&r.path);
        let full = if p.is_absolute() { p } else { base.join(p) };
        records.push(FaceRecord {
            subject_id: r.subject,
            age_years: r.age,
            path: full,
        });
    }
    build_corpus(records, Some(path.to_path_buf()), Vec::new(), path)
}

/// Write a corpus manifest. Record paths are stored relative to the
/// manifest's directory when they live under it, absolute otherwise.
pub fn write_manifest(corpus: &Corpus, out: &Path) -> Result<()> {
    let base = out.parent().unwrap_or_else(|| Path::new("."));
    let records: Vec<ManifestRecord> = corpus
        .sequences
        .iter()
        .flat_map(|seq| seq.records.iter())
        .map(|rec| ManifestRecord {
            subject: rec.subject_id.clone(),
            age: rec.age_years,
            path: rec
                .path
                .strip_prefix(base)
                .unwrap_or(&rec.path)
                .to_string_lossy()
                .into_owned(),
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&ManifestFile { records })?;
    text.push('\n');
    fs::write(out, text).map_err(|e| Error::io(out, e))
}

/// Read a binary PGM ("P5") image with maxval at most 255.
pub fn load_pgm(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

fn parse_pgm(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::UnsupportedFormat(format!(
            "expected P5 magic, found {magic:?}"
        )));
    }
    let mut pos = 2;
    let width = read_header_value(bytes, &mut pos)?;
    let height = read_header_value(bytes, &mut pos)?;
    let maxval = read_header_value(bytes, &mut pos)?;
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval} > 255")));
    }
    if maxval == 0 || width == 0 || height == 0 {
        return Err(Error::CorruptFile(format!(
            "invalid header {width}x{height} maxval {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::CorruptFile(
                "missing separator before pixel data".into(),
            ))
        }
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::CorruptFile("image dimensions overflow".into()))?;
    let payload = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::CorruptFile(format!("truncated payload, need {n} bytes")))?;
    RawImage::new(width, height, payload.to_vec())
}

/// Read one whitespace-delimited unsigned value, skipping `#` comments.
fn read_header_value(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(b) = bytes.get(*pos) {
                    *pos += 1;
                    if *b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::CorruptFile("malformed header field".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .expect("digits are ascii")
        .parse()
        .map_err(|_| Error::CorruptFile("header value too large".into()))
}

/// Write a binary PGM: header `P5\n<w> <h>\n255\n` followed by the raw bytes.
pub fn write_pgm(path: &Path, image: &RawImage) -> Result<()> {
    let mut out = Vec::with_capacity(16 + image.data.len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", image.width, image.height).as_bytes());
    out.extend_from_slice(&image.data);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
