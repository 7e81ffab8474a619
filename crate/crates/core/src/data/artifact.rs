//! Versioned text format for a trained model.
//!
//! One `key = value` pair per line, in a fixed key order. Vectors are
//! space-separated and every float is written with 17 significant digits
//! (`{:.16e}`), so reading and writing again reproduces the file exactly.
//!
//! ```text
//! format_version = 1
//! seed = 7
//! config_hash = 3f2a...
//! decision = beta
//! d_in = 32
//! d_out = 16
//! projection.weights = <d_out·d_in floats, row-major>
//! projection.bias = <d_out floats>
//! gaussian.n = 1600
//! gaussian.ridge = 1.0000000000000000e-6
//! gaussian.mean = <d_out floats>
//! gaussian.cov_lower = <d_out·(d_out+1)/2 floats, row-wise lower triangle>
//! threshold.beta = ...
//! threshold.a = ...
//! threshold.b = ...
//! threshold.v_beta = ...
//! mlp.hidden = <h1> <h2>          (only with decision = mlp)
//! mlp.params = <floats>           (only with decision = mlp)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{io_err, Label};
use crate::betadist::BetaParams;
use crate::linalg::{GaussianModel, SymMatrix};
use crate::mahalanobis::{decision_statistic, DecisionScore, DecisionThreshold};
use crate::trainer::{MlpHead, ProjectionHead};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Which rule turns a projected embedding into a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    Beta,
    Mlp,
}

impl DecisionKind {
    pub fn name(self) -> &'static str {
        match self {
            DecisionKind::Beta => "beta",
            DecisionKind::Mlp => "mlp",
        }
    }
}

impl FromStr for DecisionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(DecisionKind::Beta),
            "mlp" => Ok(DecisionKind::Mlp),
            other => Err(Error::InvalidConfig(format!(
                "unknown decision rule {other:?} (expected beta or mlp)"
            ))),
        }
    }
}

impl std::fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    /// Hex digest of the canonical training configuration.
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, canonical_config: &str) -> Self {
        let digest = Sha256::digest(canonical_config.as_bytes());
        let config_hash = digest.iter().take(16).map(|b| format!("{b:02x}")).collect();
        Provenance { seed, config_hash }
    }
}

/// Everything needed to label new embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub head: ProjectionHead,
    pub model: GaussianModel,
    pub threshold: DecisionThreshold,
    /// Present exactly when the decision rule is [`DecisionKind::Mlp`].
    pub mlp: Option<MlpHead>,
    pub provenance: Provenance,
}

/// Per-instance output of [`ModelArtifact::infer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference {
    pub label: Label,
    pub score: DecisionScore,
    /// MLP logit when that rule is active.
    pub mlp_logit: Option<f64>,
}

impl ModelArtifact {
    pub fn decision(&self) -> DecisionKind {
        if self.mlp.is_some() {
            DecisionKind::Mlp
        } else {
            DecisionKind::Beta
        }
    }

    pub fn d_in(&self) -> usize {
        self.head.d_in()
    }

    pub fn infer(&self, x: &[f64]) -> Result<Inference> {
        if x.len() != self.head.d_in() {
            return Err(Error::dim(self.head.d_in(), x.len()));
        }
        let z = self.head.project(x);
        let score = decision_statistic(&self.model, &z)?;
        Ok(match &self.mlp {
            Some(mlp) => {
                let logit = mlp.score(&z);
                Inference {
                    label: if logit > 0.0 { Label::Target } else { Label::NonTarget },
                    score,
                    mlp_logit: Some(logit),
                }
            }
            None => Inference {
                label: self.threshold.label_for(score.t),
                score,
                mlp_logit: None,
            },
        })
    }

    /// Score used for ranking: larger means more target-like.
    pub fn ranking_score(inf: &Inference) -> f64 {
        inf.mlp_logit.unwrap_or(-inf.score.t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format_version", MODEL_FORMAT_VERSION.to_string());
        kv("seed", self.provenance.seed.to_string());
        kv("config_hash", self.provenance.config_hash.clone());
        kv("decision", self.decision().to_string());
        kv("d_in", self.head.d_in().to_string());
        kv("d_out", self.head.d_out().to_string());
        kv("projection.weights", floats(self.head.weights()));
        kv("projection.bias", floats(self.head.bias()));
        kv("gaussian.n", self.model.n().to_string());
        kv("gaussian.ridge", float(self.model.ridge()));
        kv("gaussian.mean", floats(self.model.mean()));
        kv("gaussian.cov_lower", floats(self.model.cov().lower()));
        kv("threshold.beta", float(self.threshold.beta_level()));
        kv("threshold.a", float(self.threshold.params().a()));
        kv("threshold.b", float(self.threshold.params().b()));
        kv("threshold.v_beta", float(self.threshold.v_beta()));
        if let Some(mlp) = &self.mlp {
            let (h1, h2) = mlp.hidden();
            kv("mlp.hidden", format!("{h1} {h2}"));
            kv("mlp.params", floats(&mlp.to_flat()));
        }
        s
    }

    pub fn from_text(text: &str, path: Option<&Path>) -> Result<Self> {
        let mut fields = Fields::parse(text, path)?;
        let version: u32 = fields.scalar("format_version")?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let seed: u64 = fields.scalar("seed")?;
        let config_hash = fields.take("config_hash")?;
        let decision: DecisionKind = fields
            .take("decision")?
            .parse()
            .map_err(|e: Error| fields.err(e.to_string()))?;
        let d_in: usize = fields.scalar("d_in")?;
        let d_out: usize = fields.scalar("d_out")?;
        let weights = fields.vector("projection.weights", d_in * d_out)?;
        let bias = fields.vector("projection.bias", d_out)?;
        let head = ProjectionHead::from_parts(d_in, d_out, weights, bias)?;
        let n: usize = fields.scalar("gaussian.n")?;
        let ridge: f64 = fields.scalar("gaussian.ridge")?;
        let mean = fields.vector("gaussian.mean", d_out)?;
        let lower = fields.vector("gaussian.cov_lower", d_out * (d_out + 1) / 2)?;
        let model = GaussianModel::from_parts(mean, SymMatrix::from_lower(d_out, lower)?, n, ridge)?;
        let beta: f64 = fields.scalar("threshold.beta")?;
        let a: f64 = fields.scalar("threshold.a")?;
        let b: f64 = fields.scalar("threshold.b")?;
        let v_beta: f64 = fields.scalar("threshold.v_beta")?;
        let threshold = DecisionThreshold::from_stored(BetaParams::new(a, b)?, beta, v_beta)?;
        threshold.check_model(&model)?;
        let mlp = match decision {
            DecisionKind::Beta => None,
            DecisionKind::Mlp => {
                let hidden = fields.take("mlp.hidden")?;
                let dims: Vec<usize> = hidden
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| fields.err(format!("bad mlp.hidden {hidden:?}")))?;
                let &[h1, h2] = dims.as_slice() else {
                    return Err(fields.err(format!("mlp.hidden needs two widths, got {hidden:?}")));
                };
                let params = fields.floats("mlp.params")?;
                Some(MlpHead::from_flat(d_out, (h1, h2), &params)?)
            }
        };
        fields.finish()?;
        Ok(ModelArtifact {
            head,
            model,
            threshold,
            mlp,
            provenance: Provenance { seed, config_hash },
        })
    }
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn floats(vs: &[f64]) -> String {
    vs.iter().map(|v| float(*v)).collect::<Vec<_>>().join(" ")
}

/// Key/value pairs of one artifact file with line numbers for errors.
struct Fields<'a> {
    path: Option<&'a Path>,
    map: HashMap<String, (usize, String)>,
    last_line: usize,
}

impl<'a> Fields<'a> {
    fn parse(text: &str, path: Option<&'a Path>) -> Result<Self> {
        if !text.ends_with('\n') {
            return Err(Error::Parse {
                path: path.map(Path::to_path_buf),
                line: text.lines().count(),
                message: "file ends mid-line (truncated?)".into(),
            });
        }
        let mut map = HashMap::new();
        let mut last_line = 0;
        for (idx, line) in text.lines().enumerate() {
            last_line = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once(" = ") else {
                return Err(Error::Parse {
                    path: path.map(Path::to_path_buf),
                    line: idx + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            if map.insert(k.to_string(), (idx + 1, v.to_string())).is_some() {
                return Err(Error::Parse {
                    path: path.map(Path::to_path_buf),
                    line: idx + 1,
                    message: format!("duplicate key {k:?}"),
                });
            }
        }
        Ok(Fields {
            path,
            map,
            last_line,
        })
    }

    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.map(Path::to_path_buf),
            line: self.last_line,
            message,
        }
    }

    fn take(&mut self, key: &str) -> Result<String> {
        match self.map.remove(key) {
            Some((line, v)) => {
                self.last_line = line;
                Ok(v)
            }
            None => Err(self.err(format!("missing key {key:?}"))),
        }
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let raw = self.take(key)?;
        raw.parse()
            .map_err(|_| self.err(format!("cannot parse {key} from {raw:?}")))
    }

    fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let raw = self.take(key)?;
        raw.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(format!("bad number {t:?} in {key}")))
            })
            .collect()
    }

    fn vector(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let v = self.floats(key)?;
        if v.len() != len {
            return Err(self.err(format!("{key} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        let mut extra: Vec<_> = self.map.into_iter().collect();
        extra.sort_by_key(|(_, (line, _))| *line);
        match extra.first() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Parse {
                path: self.path.map(Path::to_path_buf),
                line: *line,
                message: format!("unknown key {k:?}"),
            }),
        }
    }
}

pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, artifact.to_text()).map_err(io_err(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ModelArtifact::from_text(&text, Some(path))
}
