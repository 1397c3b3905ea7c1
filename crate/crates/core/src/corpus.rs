//! Corpus container, stratified splits, and the on-disk corpus format.
//!
//! A corpus directory holds one plain-text manifest (`manifest.csv`, one
//! record per line: sample id, class name, split, four view file paths)
//! plus one binary file per view. View files carry the magic `GLV1`,
//! rows and cols as unsigned 32-bit little-endian, then rows*cols IEEE 754
//! 32-bit little-endian floats in row-major order.
//!
//! `decode_view` and `parse_manifest` accept arbitrary byte slices and are
//! fuzzed; they must fail cleanly, never panic or over-allocate.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::MultiViewSample;
use crate::synth::{render_sample, sample_seed, GlitchClassSpec, GLITCH_CLASSES};
use crate::tensor::Tensor;

pub const VIEW_MAGIC: &[u8; 4] = b"GLV1";
/// Upper bound on rows*cols accepted from untrusted view headers.
const MAX_VIEW_ELEMS: u64 = 1 << 24;

/// Which split a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Samples plus their split assignment and the class-name table. Split
/// fractions are 75 / 12.5 / 12.5 percent per class (within one sample of
/// rounding), stratified and disjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    class_names: Vec<String>,
    samples: Vec<MultiViewSample>,
    splits: Vec<Split>,
}

impl Corpus {
    #[cfg(test)]
    pub(crate) fn from_parts(
        class_names: Vec<String>,
        samples: Vec<MultiViewSample>,
        splits: Vec<Split>,
    ) -> Self {
        Corpus {
            class_names,
            samples,
            splits,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn sample(&self, idx: usize) -> &MultiViewSample {
        &self.samples[idx]
    }

    pub fn split_of(&self, idx: usize) -> Split {
        self.splits[idx]
    }

    /// Sample indices of one split, in corpus order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn samples_in(&self, split: Split) -> Vec<&MultiViewSample> {
        self.indices(split).into_iter().map(|i| self.sample(i)).collect()
    }
}

/// Per-class split sizes: round(0.75 N) train, round(0.125 N) validation,
/// remainder test.
fn split_sizes(per_class: usize) -> (usize, usize, usize) {
    let train = (3 * per_class + 2) / 4;
    let val = (per_class + 4) / 8;
    (train, val, per_class - train - val)
}

/// Deterministic synthetic corpus over the full 20-class table.
pub fn generate_corpus(per_class: usize, seed: u64) -> Result<Corpus> {
    generate_corpus_with(&GLITCH_CLASSES, per_class, seed)
}

/// Corpus over an explicit class subset; class indices are re-based onto
/// the subset so labels stay dense.
pub fn generate_corpus_with(
    classes: &[GlitchClassSpec],
    per_class: usize,
    seed: u64,
) -> Result<Corpus> {
    if per_class < 8 {
        return Err(Error::Validation(format!(
            "per_class must be at least 8 so every split is non-empty, got {per_class}"
        )));
    }
    if classes.is_empty() {
        return Err(Error::Validation("no classes given".to_string()));
    }
    let (n_train, n_val, _) = split_sizes(per_class);
    // (class, index) pairs in corpus order; rendering is pure per pair.
    let coords: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|c| (0..per_class).map(move |i| (c, i)))
        .collect();
    let samples: Vec<MultiViewSample> = coords
        .par_iter()
        .map(|&(c, i)| {
            let spec = &classes[c];
            let mut s = render_sample(spec, sample_seed(seed, spec.class_index, i));
            s.label = c;
            s
        })
        .collect();
    let splits = coords
        .iter()
        .map(|&(_, i)| {
            if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect();
    Ok(Corpus {
        class_names: classes.iter().map(|c| c.name.to_string()).collect(),
        samples,
        splits,
    })
}

/// One manifest line: sample id, class name, split, four view paths
/// relative to the corpus directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub class_name: String,
    pub split: Split,
    pub view_paths: [String; 4],
}

impl ManifestRecord {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.id,
            self.class_name,
            self.split.as_str(),
            self.view_paths[0],
            self.view_paths[1],
            self.view_paths[2],
            self.view_paths[3]
        )
    }
}

/// Parses manifest text: one record per non-empty line, seven
/// comma-separated fields.
pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<ManifestRecord>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Parse(format!("manifest is not UTF-8: {e}")))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "manifest line {}: expected 7 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let split = Split::parse(fields[2]).ok_or_else(|| {
            Error::Parse(format!(
                "manifest line {}: unknown split {:?}",
                lineno + 1,
                fields[2]
            ))
        })?;
        records.push(ManifestRecord {
            id: fields[0].to_string(),
            class_name: fields[1].to_string(),
            split,
            view_paths: [
                fields[3].to_string(),
                fields[4].to_string(),
                fields[5].to_string(),
                fields[6].to_string(),
            ],
        });
    }
    Ok(records)
}

/// Serializes a view to the GLV1 wire format.
pub fn encode_view(view: &Tensor<f32>) -> Vec<u8> {
    let (rows, cols) = (view.dims()[0] as u32, view.dims()[1] as u32);
    let mut out = Vec::with_capacity(12 + view.numel() * 4);
    out.extend_from_slice(VIEW_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for &v in view.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses the GLV1 wire format from an untrusted byte slice.
pub fn decode_view(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 12 {
        return Err(Error::Parse(format!(
            "view file truncated: {} bytes, need at least 12",
            bytes.len()
        )));
    }
    if &bytes[0..4] != VIEW_MAGIC {
        return Err(Error::Parse("view file has bad magic".to_string()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as u64;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    if rows == 0 || cols == 0 || rows * cols > MAX_VIEW_ELEMS {
        return Err(Error::Parse(format!(
            "view file has unreasonable dimensions {rows}x{cols}"
        )));
    }
    let n = (rows * cols) as usize;
    let want = 12 + 4 * n;
    if bytes.len() != want {
        return Err(Error::Parse(format!(
            "view file has {} bytes, expected {want} for {rows}x{cols}",
            bytes.len()
        )));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(&[rows as usize, cols as usize], data)
}

fn read_view_file(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_view(&bytes).map_err(|e| match e {
        Error::Parse(detail) => Error::Parse(format!("{}: {detail}", path.display())),
        other => other,
    })
}

fn sample_id(idx: usize) -> String {
    format!("s{idx:05}")
}

/// Writes the corpus to `dir`: `manifest.csv` plus `views/<id>_<v>.glv`.
pub fn export_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    let views_dir = dir.join("views");
    fs::create_dir_all(&views_dir).map_err(|e| Error::io(&views_dir, e))?;
    let mut manifest = String::new();
    for idx in 0..corpus.len() {
        let sample = corpus.sample(idx);
        let id = sample_id(idx);
        let mut paths = Vec::with_capacity(4);
        for v in 0..4 {
            let rel = format!("views/{id}_{v}.glv");
            let path = dir.join(&rel);
            fs::write(&path, encode_view(sample.view(v))).map_err(|e| Error::io(&path, e))?;
            paths.push(rel);
        }
        let record = ManifestRecord {
            id,
            class_name: corpus.class_names[sample.label].clone(),
            split: corpus.split_of(idx),
            view_paths: [
                paths.remove(0),
                paths.remove(0),
                paths.remove(0),
                paths.remove(0),
            ],
        };
        manifest.push_str(&record.to_line());
        manifest.push('\n');
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
}

/// Reads a corpus directory written by `export_corpus`. Round-trips
/// bit-exactly: `import(export(c)) == c`.
pub fn import_corpus(dir: &Path) -> Result<Corpus> {
    let manifest_path = dir.join("manifest.csv");
    let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let records = parse_manifest(&bytes)?;
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "manifest {} lists no samples",
            manifest_path.display()
        )));
    }
    let class_names: Vec<String> = GLITCH_CLASSES.iter().map(|c| c.name.to_string()).collect();
    let mut samples = Vec::with_capacity(records.len());
    let mut splits = Vec::with_capacity(records.len());
    for record in &records {
        let label = class_names
            .iter()
            .position(|n| n == &record.class_name)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "sample {}: unknown class name {:?}",
                    record.id, record.class_name
                ))
            })?;
        let mut views = Vec::with_capacity(4);
        for rel in &record.view_paths {
            views.push(read_view_file(&dir.join(rel))?);
        }
        let sample = MultiViewSample::new(
            [
                views.remove(0),
                views.remove(0),
                views.remove(0),
                views.remove(0),
            ],
            label,
        )?;
        samples.push(sample);
        splits.push(record.split);
    }
    Ok(Corpus {
        class_names,
        samples,
        splits,
    })
}

/// FNV-1a digest of manifest bytes; stored in checkpoints as corpus
/// provenance (the corpus format itself does not carry its seed).
pub fn manifest_digest(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Digest of the manifest inside a corpus directory.
pub fn corpus_digest(dir: &Path) -> Result<u64> {
    let manifest_path = dir.join("manifest.csv");
    let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_digest(&bytes))
}
