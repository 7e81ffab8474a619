//! Command-line front-end.
//!
//! Every subcommand shares one set of flags. Any flag may also come from a
//! `--config` file of `key = value` lines keyed by the long flag name
//! (`batch-size = 40`); flags given on the command line win. Unknown keys
//! are rejected before any work starts.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numerical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{
    load_dataset, load_model, parse_key_values, save_dataset, save_model, split, synth_benchmark,
    write_json_lines, write_tsv, DecisionKind, EmbeddingDataset, ModelArtifact, SynthConfig,
    DEFAULT_SPLIT_RATIOS,
};
use crate::diagnostics::{emit_distance_report, emit_qq, normality_report, DEFAULT_COMPONENTS};
use crate::linalg::fit_gaussian;
use crate::loss::LossKind;
use crate::mahalanobis::{calibrate, CalibrationObjective, DecisionThreshold};
use crate::pipeline::{evaluate, fit, PipelineConfig, ThresholdChoice};
use crate::trainer::{ProjectionHead, TrainConfig};
use crate::{Error, Result};

pub const DEFAULT_FPR_CAP: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "classdistill", version, about = "Class distillation over embedding vectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark dataset.
    Synth(Opts),
    /// Split, train, calibrate on dev and save a model.
    Train(Opts),
    /// Re-choose the threshold of a saved model on a dataset.
    Calibrate(Opts),
    /// Label every instance of a dataset.
    Infer(Opts),
    /// Score a saved model on a dataset.
    Evaluate(Opts),
    /// Normality statistics, Q-Q data and distance reports.
    Diagnose(Opts),
    /// Loss × decision-rule comparison table.
    Ablate(Opts),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Calibrate(_) => "calibrate",
            Command::Infer(_) => "infer",
            Command::Evaluate(_) => "evaluate",
            Command::Diagnose(_) => "diagnose",
            Command::Ablate(_) => "ablate",
        }
    }

    pub fn opts(&self) -> &Opts {
        match self {
            Command::Synth(o)
            | Command::Train(o)
            | Command::Calibrate(o)
            | Command::Infer(o)
            | Command::Evaluate(o)
            | Command::Diagnose(o)
            | Command::Ablate(o) => o,
        }
    }
}

/// Raw flags; `None` means "not given".
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Key-value file supplying defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// mah | mah-mean | cosine
    #[arg(long)]
    pub loss: Option<String>,
    /// beta | mlp
    #[arg(long)]
    pub decision: Option<String>,
    /// Fixed quantile level instead of calibration.
    #[arg(long)]
    pub beta_level: Option<f64>,
    /// f1 | f1-fpr-cap
    #[arg(long)]
    pub calibrate: Option<String>,
    /// FPR ceiling for `--calibrate f1-fpr-cap`.
    #[arg(long)]
    pub fpr_cap: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub window_mult: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
    /// Principal components for diagnostics.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// all | train | dev | test (split recomputed from the model's seed).
    #[arg(long)]
    pub split: Option<String>,
    /// Decide with the final sliding-window statistics.
    #[arg(long)]
    pub window_stats: bool,
    #[arg(long)]
    pub mlp_epochs: Option<usize>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long)]
    pub n_non_target: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub manifold_dim: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub thickness: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

impl Opts {
    /// Fills unset fields from a config file.
    fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let owned = path.to_path_buf();
        for (key, value) in parse_key_values(&text, Some(&owned))? {
            let v = value.as_str();
            macro_rules! fill {
                ($field:ident) => {
                    if self.$field.is_none() {
                        self.$field = Some(parse_value(&key, v)?);
                    }
                };
            }
            match key.as_str() {
                "input" => fill!(input),
                "output" => fill!(output),
                "model" => fill!(model),
                "loss" => fill!(loss),
                "decision" => fill!(decision),
                "beta-level" => fill!(beta_level),
                "calibrate" => fill!(calibrate),
                "fpr-cap" => fill!(fpr_cap),
                "batch-size" => fill!(batch_size),
                "window-mult" => fill!(window_mult),
                "epochs" => fill!(epochs),
                "lr" => fill!(lr),
                "ridge" => fill!(ridge),
                "proj-dim" => fill!(proj_dim),
                "k" => fill!(k),
                "seed" => fill!(seed),
                "split" => fill!(split),
                "mlp-epochs" => fill!(mlp_epochs),
                "n-target" => fill!(n_target),
                "n-non-target" => fill!(n_non_target),
                "dim" => fill!(dim),
                "manifold-dim" => fill!(manifold_dim),
                "components" => fill!(components),
                "separation" => fill!(separation),
                "thickness" => fill!(thickness),
                "window-stats" => {
                    if !self.window_stats {
                        self.window_stats = parse_value(&key, v)?;
                    }
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown key {other:?} in {}",
                        path.display()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Which part of a dataset a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    All,
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for SplitChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(SplitChoice::All),
            "train" => Ok(SplitChoice::Train),
            "dev" => Ok(SplitChoice::Dev),
            "test" => Ok(SplitChoice::Test),
            other => Err(Error::InvalidConfig(format!(
                "unknown split {other:?} (expected all, train, dev or test)"
            ))),
        }
    }
}

/// Validated settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub k: usize,
    pub split: SplitChoice,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn resolve(command: &Command) -> Result<Self> {
        let mut o = command.opts().clone();
        if let Some(path) = o.config.clone() {
            o.merge_file(&path)?;
        }
        let seed = o.seed.unwrap_or(0);
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            loss: o.loss.as_deref().map(str::parse).transpose()?.unwrap_or(defaults.loss),
            batch_size: o.batch_size.unwrap_or(defaults.batch_size),
            window_multiplier: o.window_mult.unwrap_or(defaults.window_multiplier),
            learning_rate: o.lr.unwrap_or(defaults.learning_rate),
            epochs: o.epochs.unwrap_or(defaults.epochs),
            ridge: o.ridge.unwrap_or(defaults.ridge),
            proj_dim: o.proj_dim.or(defaults.proj_dim),
            seed,
        };
        train.validate()?;

        let fpr_cap = o.fpr_cap.unwrap_or(DEFAULT_FPR_CAP);
        if !(0.0..=1.0).contains(&fpr_cap) {
            return Err(Error::InvalidConfig(format!("--fpr-cap must lie in [0, 1], got {fpr_cap}")));
        }
        let threshold = match (o.beta_level, o.calibrate.as_deref()) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "--beta-level and --calibrate are mutually exclusive".into(),
                ))
            }
            (Some(beta), None) => {
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidConfig(format!("--beta-level must lie in (0, 1), got {beta}")));
                }
                ThresholdChoice::Fixed(beta)
            }
            (None, None) | (None, Some("f1")) => ThresholdChoice::Calibrate(CalibrationObjective::MaxF1),
            (None, Some("f1-fpr-cap")) => {
                ThresholdChoice::Calibrate(CalibrationObjective::MaxF1AtFprCap(fpr_cap))
            }
            (None, Some(other)) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown calibration objective {other:?} (expected f1 or f1-fpr-cap)"
                )))
            }
        };
        let decision = o
            .decision
            .as_deref()
            .map(str::parse)
            .transpose()?
            .unwrap_or(DecisionKind::Beta);
        let pipeline = PipelineConfig {
            train,
            decision,
            threshold,
            window_stats: o.window_stats,
            mlp_epochs: o.mlp_epochs.unwrap_or(PipelineConfig::default().mlp_epochs),
        };

        let k = o.k.unwrap_or(DEFAULT_COMPONENTS);
        if k == 0 {
            return Err(Error::InvalidConfig("--k must be positive".into()));
        }
        let split = o.split.as_deref().map(str::parse).transpose()?.unwrap_or(SplitChoice::All);
        let sd = SynthConfig::default();
        let synth = SynthConfig {
            d_in: o.dim.unwrap_or(sd.d_in),
            manifold_dim: o.manifold_dim.unwrap_or(sd.manifold_dim),
            n_target: o.n_target.unwrap_or(sd.n_target),
            m_non_target: o.n_non_target.unwrap_or(sd.m_non_target),
            components: o.components.unwrap_or(sd.components),
            separation: o.separation.unwrap_or(sd.separation),
            thickness: o.thickness.unwrap_or(sd.thickness),
            seed,
        };

        let cfg = RunConfig {
            input: o.input,
            output: o.output,
            model: o.model,
            pipeline,
            k,
            split,
            synth,
        };
        let required: &[(&str, bool)] = match command {
            Command::Synth(_) => &[("--output", cfg.output.is_some())],
            Command::Train(_) => &[("--input", cfg.input.is_some()), ("--output", cfg.output.is_some())],
            Command::Calibrate(_) | Command::Infer(_) | Command::Evaluate(_) => {
                &[("--input", cfg.input.is_some()), ("--model", cfg.model.is_some())]
            }
            Command::Diagnose(_) => &[("--input", cfg.input.is_some()), ("--output", cfg.output.is_some())],
            Command::Ablate(_) => &[("--input", cfg.input.is_some())],
        };
        if let Some((flag, _)) = required.iter().find(|(_, present)| !present) {
            return Err(Error::InvalidConfig(format!(
                "{} requires {flag}",
                command.name()
            )));
        }
        Ok(cfg)
    }

    fn input(&self) -> &Path {
        self.input.as_deref().expect("checked in resolve")
    }

    fn model_path(&self) -> &Path {
        self.model.as_deref().expect("checked in resolve")
    }
}

/// Parses `args` (program name first) and runs the command, writing
/// human-readable progress to `out`.
pub fn run_from<I, S, W>(args: I, out: &mut W) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
    W: Write,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    run(&cli.command, out)
}

pub fn run<W: Write>(command: &Command, out: &mut W) -> Result<()> {
    let cfg = RunConfig::resolve(command)?;
    match command {
        Command::Synth(_) => cmd_synth(&cfg, out),
        Command::Train(_) => cmd_train(&cfg, out),
        Command::Calibrate(_) => cmd_calibrate(&cfg, out),
        Command::Infer(_) => cmd_infer(&cfg, out),
        Command::Evaluate(_) => cmd_evaluate(&cfg, out),
        Command::Diagnose(_) => cmd_diagnose(&cfg, out),
        Command::Ablate(_) => cmd_ablate(&cfg, out),
    }
}

fn say<W: Write>(out: &mut W, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })
}

fn select(data: EmbeddingDataset, choice: SplitChoice, seed: u64) -> Result<EmbeddingDataset> {
    if choice == SplitChoice::All {
        return Ok(data);
    }
    let s = split(&data, DEFAULT_SPLIT_RATIOS, seed)?;
    Ok(match choice {
        SplitChoice::Train => s.train,
        SplitChoice::Dev => s.dev,
        SplitChoice::Test => s.test,
        SplitChoice::All => unreachable!(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn cmd_synth<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let data = synth_benchmark(&cfg.synth)?;
    let path = cfg.output.as_deref().expect("checked in resolve");
    save_dataset(&data, path)?;
    say(
        out,
        format_args!(
            "wrote {} records ({} target, {} non-target), dimension {} to {}",
            data.len(),
            data.n_target(),
            data.n_non_target(),
            data.d_in(),
            path.display()
        ),
    )
}

/// Path of the training log written next to a model file.
pub fn train_log_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".trainlog.jsonl");
    PathBuf::from(name)
}

pub fn cmd_train<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let data = load_dataset(cfg.input())?;
    let splits = split(&data, DEFAULT_SPLIT_RATIOS, cfg.pipeline.train.seed)?;
    let fitted = fit(&splits, &cfg.pipeline)?;
    let path = cfg.output.as_deref().expect("checked in resolve");
    save_model(&fitted.artifact, path)?;
    write_json_lines(train_log_path(path), &fitted.log)?;
    say(
        out,
        format_args!(
            "trained {} epoch(s) with {} loss on {} records; beta = {:.6}, v_beta = {:.6e}",
            cfg.pipeline.train.epochs,
            cfg.pipeline.train.loss,
            splits.train.len(),
            fitted.artifact.threshold.beta_level(),
            fitted.artifact.threshold.v_beta()
        ),
    )?;
    say(out, format_args!("dev metrics:\n{}", fitted.dev_report))?;
    say(out, format_args!("model written to {}", path.display()))
}

pub fn cmd_calibrate<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let mut artifact = load_model(cfg.model_path())?;
    let data = select(load_dataset(cfg.input())?, cfg.split, artifact.provenance.seed)?;
    let dev = artifact.head.project_dataset(&data)?;
    artifact.threshold = match cfg.pipeline.threshold {
        ThresholdChoice::Fixed(beta) => DecisionThreshold::for_model(&artifact.model, beta)?,
        ThresholdChoice::Calibrate(objective) => {
            let c = calibrate(&artifact.model, &dev, objective)?;
            say(out, format_args!("calibrated F1 = {:.6}, FPR = {:.6}", c.dev_f1, c.dev_fpr))?;
            c.threshold
        }
    };
    let target = cfg.output.as_deref().unwrap_or(cfg.model_path());
    save_model(&artifact, target)?;
    say(
        out,
        format_args!(
            "beta = {:.6}, v_beta = {:.6e}; model written to {}",
            artifact.threshold.beta_level(),
            artifact.threshold.v_beta(),
            target.display()
        ),
    )
}

#[derive(Debug, Serialize)]
struct InferRow<'a> {
    id: &'a str,
    label: u8,
    t: f64,
    d2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logit: Option<f64>,
}

pub fn cmd_infer<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let artifact = load_model(cfg.model_path())?;
    let data = select(load_dataset(cfg.input())?, cfg.split, artifact.provenance.seed)?;
    let rows = data
        .records()
        .iter()
        .map(|r| {
            let inf = artifact.infer(&r.vector)?;
            Ok(InferRow {
                id: &r.id,
                label: inf.label.as_u8(),
                t: inf.score.t,
                d2: inf.score.d2,
                logit: inf.mlp_logit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_target = rows.iter().filter(|r| r.label == 1).count();
    match cfg.output.as_deref() {
        Some(path) => {
            write_json_lines(path, &rows)?;
            say(
                out,
                format_args!(
                    "labelled {} instances ({n_target} target) into {}",
                    rows.len(),
                    path.display()
                ),
            )
        }
        None => {
            for row in &rows {
                let line = serde_json::to_string(row).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                say(out, format_args!("{line}"))?;
            }
            Ok(())
        }
    }
}

pub fn cmd_evaluate<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let artifact = load_model(cfg.model_path())?;
    let data = select(load_dataset(cfg.input())?, cfg.split, artifact.provenance.seed)?;
    let (_, report) = evaluate(&artifact, &data)?;
    if let Some(path) = cfg.output.as_deref() {
        write_text(path, &report.to_string())?;
    }
    say(out, format_args!("{report}"))
}

#[derive(Debug, Serialize)]
struct NormalityRow {
    label: u8,
    n: usize,
    k: usize,
    hz: f64,
    ad: Vec<f64>,
    mean_ad: f64,
    explained_variance_ratio: Vec<f64>,
    rank_deficient: bool,
}

pub fn cmd_diagnose<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let dir = cfg.output.as_deref().expect("checked in resolve");
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let raw = load_dataset(cfg.input())?;
    let (head, model, seed) = match cfg.model.as_deref() {
        Some(path) => {
            let a: ModelArtifact = load_model(path)?;
            let seed = a.provenance.seed;
            (a.head, a.model, seed)
        }
        None => {
            let head = ProjectionHead::identity(raw.d_in());
            let model = fit_gaussian(&raw.class_vectors(crate::data::Label::Target), cfg.pipeline.train.ridge)?;
            (head, model, cfg.pipeline.train.seed)
        }
    };
    let data = select(raw, cfg.split, seed)?;
    let reports = normality_report(&data, &head, cfg.k)?;

    let rows: Vec<NormalityRow> = reports
        .iter()
        .map(|r| NormalityRow {
            label: r.label.as_u8(),
            n: r.n,
            k: r.k,
            hz: r.hz,
            ad: r.ad_per_dim.clone(),
            mean_ad: r.mean_ad(),
            explained_variance_ratio: r.explained_variance_ratio.clone(),
            rank_deficient: r.rank_deficient,
        })
        .collect();
    write_json_lines(dir.join("normality.jsonl"), &rows)?;

    let mut qq_rows = Vec::new();
    for r in &reports {
        for j in 0..r.k {
            let column: Vec<f64> = r.reduced.iter().map(|p| p[j]).collect();
            for (theory, sample) in emit_qq(&column)? {
                qq_rows.push(vec![
                    r.label.as_u8().to_string(),
                    j.to_string(),
                    format!("{theory:.17e}"),
                    format!("{sample:.17e}"),
                ]);
            }
        }
    }
    write_tsv(dir.join("qq.tsv"), &["label", "dim", "theoretical", "sample"], &qq_rows)?;

    let distances = emit_distance_report(&data, &head, &model)?;
    let dist_rows: Vec<Vec<String>> = distances
        .iter()
        .map(|d| vec![d.id.clone(), d.label.as_u8().to_string(), format!("{:.17e}", d.d2)])
        .collect();
    write_tsv(dir.join("distances.tsv"), &["id", "label", "d2"], &dist_rows)?;

    for r in &reports {
        say(
            out,
            format_args!(
                "{:<10} n = {:<6} HZ = {:.6}  mean AD = {:.6}",
                r.label.to_string(),
                r.n,
                r.hz,
                r.mean_ad()
            ),
        )?;
    }
    say(out, format_args!("reports written to {}", dir.display()))
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub loss: LossKind,
    pub decision: DecisionKind,
    pub accuracy: f64,
    pub precision: f64,
    pub fpr: f64,
    pub f1: f64,
}

/// Every loss with the Beta rule, then every loss with the MLP head, all on
/// the same split and seed; metrics are on the test split.
pub fn ablation_table(data: &EmbeddingDataset, base: &PipelineConfig) -> Result<Vec<AblationRow>> {
    let splits = split(data, DEFAULT_SPLIT_RATIOS, base.train.seed)?;
    let mut rows = Vec::with_capacity(6);
    for decision in [DecisionKind::Beta, DecisionKind::Mlp] {
        for loss in LossKind::ALL {
            let cfg = PipelineConfig {
                train: TrainConfig {
                    loss,
                    ..base.train.clone()
                },
                decision,
                ..base.clone()
            };
            let fitted = fit(&splits, &cfg)?;
            let (_, r) = evaluate(&fitted.artifact, &splits.test)?;
            rows.push(AblationRow {
                loss,
                decision,
                accuracy: r.accuracy,
                precision: r.precision,
                fpr: r.fpr,
                f1: r.f1,
            });
        }
    }
    Ok(rows)
}

pub const ABLATION_COLUMNS: [&str; 6] = ["loss", "decision", "Acc", "Pr", "FPR", "F1"];

pub fn cmd_ablate<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<()> {
    let data = load_dataset(cfg.input())?;
    let rows = ablation_table(&data, &cfg.pipeline)?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.loss.to_string(),
                r.decision.to_string(),
                format!("{:.6}", r.accuracy),
                format!("{:.6}", r.precision),
                format!("{:.6}", r.fpr),
                format!("{:.6}", r.f1),
            ]
        })
        .collect();
    if let Some(path) = cfg.output.as_deref() {
        write_tsv(path, &ABLATION_COLUMNS, &cells)?;
    }
    say(out, format_args!("{}", ABLATION_COLUMNS.join("\t")))?;
    for c in &cells {
        say(out, format_args!("{}", c.join("\t")))?;
    }
    Ok(())
}
