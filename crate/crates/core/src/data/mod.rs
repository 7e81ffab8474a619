//! Datasets of labelled embedding vectors and their file formats.
//!
//! A dataset file holds one JSON object per line:
//!
//! ```text
//! {"id":"000017","label":1,"vector":[0.25,-1.5,3.0]}
//! ```
//!
//! `label` is `1` for the target class and `0` otherwise. Every vector in a
//! file has the same nonzero length, values are finite, and ids are unique.

mod artifact;
mod split;
mod synth;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use artifact::{
    load_model, save_model, DecisionKind, Inference, ModelArtifact, Provenance, MODEL_FORMAT_VERSION,
};
pub use split::{split, Splits, DEFAULT_SPLIT_RATIOS};
pub use synth::{synth_benchmark, SynthConfig};

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonTarget,
    Target,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::NonTarget => 0,
            Label::Target => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::NonTarget),
            1 => Some(Label::Target),
            _ => None,
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }
}

/// Serialised as `0` or `1`, as in dataset files.
impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Target => "target",
            Label::NonTarget => "non-target",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: Label,
    pub vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    label: i64,
    vector: Vec<f64>,
}

/// Validated collection of records sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    records: Vec<EmbeddingRecord>,
    d_in: usize,
    n_target: usize,
}

impl EmbeddingDataset {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let d_in = records
            .first()
            .map(|r| r.vector.len())
            .ok_or_else(|| Error::InvalidConfig("dataset has no records".into()))?;
        if d_in == 0 {
            return Err(Error::dim(1, 0));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if r.vector.len() != d_in {
                return Err(Error::DimensionMismatch {
                    expected: d_in,
                    got: r.vector.len(),
                    context: Some(format!("record {:?}", r.id)),
                });
            }
            if let Some(bad) = r.vector.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "record {:?} has non-finite value {bad}",
                    r.id
                )));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        let n_target = records.iter().filter(|r| r.label.is_target()).count();
        Ok(EmbeddingDataset {
            records,
            d_in,
            n_target,
        })
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn n_non_target(&self) -> usize {
        self.records.len() - self.n_target
    }

    /// Vectors of one class, in dataset order.
    pub fn class_vectors(&self, label: Label) -> Vec<&[f64]> {
        self.records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.vector.as_slice())
            .collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Same ids and labels with every vector replaced by `f(vector)`.
    pub fn map_vectors<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Result<EmbeddingDataset> {
        EmbeddingDataset::new(
            self.records
                .iter()
                .map(|r| EmbeddingRecord {
                    id: r.id.clone(),
                    label: r.label,
                    vector: f(&r.vector),
                })
                .collect(),
        )
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            let raw = RawRecord {
                id: r.id.clone(),
                label: r.label.as_u8() as i64,
                vector: r.vector.clone(),
            };
            serde_json::to_writer(&mut out, &raw)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses the line-delimited dataset format.
pub fn parse_dataset<R: Read>(reader: R, path: Option<&Path>) -> Result<EmbeddingDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.map(Path::to_path_buf),
        line,
        message,
    };
    let mut records = Vec::new();
    let mut d_in: Option<usize> = None;
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let label = u8::try_from(raw.label)
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| parse_err(lineno, format!("label must be 0 or 1, got {}", raw.label)))?;
        if raw.vector.is_empty() {
            return Err(parse_err(lineno, "empty vector".into()));
        }
        let expected = *d_in.get_or_insert(raw.vector.len());
        if raw.vector.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: raw.vector.len(),
                context: Some(format!("record {:?} on line {lineno}", raw.id)),
            });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        records.push(EmbeddingRecord {
            id: raw.id,
            label,
            vector: raw.vector,
        });
    }
    if records.is_empty() {
        return Err(parse_err(0, "no records".into()));
    }
    EmbeddingDataset::new(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_dataset(file, Some(path))
}

pub fn save_dataset(data: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    data.write_to(&mut out).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Writes any serialisable records as JSON lines.
pub fn write_json_lines<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row)
            .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Writes a tab-separated file with a header row.
pub fn write_tsv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(out, "{}", header.join("\t"))?;
        for row in rows {
            writeln!(out, "{}", row.join("\t"))?;
        }
        out.flush()
    };
    emit().map_err(io_err(path))
}

/// Parses `key = value` lines; `#` starts a comment. Keys keep file order.
pub fn parse_key_values(text: &str, path: Option<&PathBuf>) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            path: path.cloned(),
            line: idx + 1,
            message: format!("expected `key = value`, got {trimmed:?}"),
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}
