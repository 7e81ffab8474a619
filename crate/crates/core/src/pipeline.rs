//! End-to-end composition: split, train, pick a threshold, evaluate.

use crate::data::{split, DecisionKind, EmbeddingDataset, Inference, ModelArtifact, Provenance, Splits, DEFAULT_SPLIT_RATIOS};
use crate::linalg::{fit_gaussian, GaussianModel};
use crate::mahalanobis::{calibrate, CalibrationObjective, DecisionThreshold};
use crate::metrics::{roc_auc, score, MetricsReport};
use crate::trainer::{train, train_mlp, MlpConfig, ProjectionHead, TrainConfig, TrainLogRecord};
use crate::{Error, Result};

/// How the decision threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChoice {
    /// Fixed quantile level `β`.
    Fixed(f64),
    /// Tuned on the development split.
    Calibrate(CalibrationObjective),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub decision: DecisionKind,
    pub threshold: ThresholdChoice,
    /// Keep the final sliding-window statistics for decisions instead of
    /// re-estimating them from the projected training targets.
    pub window_stats: bool,
    pub mlp_epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            decision: DecisionKind::Beta,
            threshold: ThresholdChoice::Calibrate(CalibrationObjective::MaxF1),
            window_stats: false,
            mlp_epochs: MlpConfig::default().epochs,
        }
    }
}

impl PipelineConfig {
    pub fn canonical(&self) -> String {
        format!(
            "{};decision={};threshold={:?};window_stats={};mlp_epochs={}",
            self.train.canonical(),
            self.decision,
            self.threshold,
            self.window_stats,
            self.mlp_epochs
        )
    }
}

#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub artifact: ModelArtifact,
    pub dev_report: MetricsReport,
    pub log: Vec<TrainLogRecord>,
    /// Head before the first optimisation step.
    pub initial_head: ProjectionHead,
    pub initial_model: GaussianModel,
}

/// Target statistics of the projected training targets.
pub fn refit_model(data: &EmbeddingDataset, head: &ProjectionHead, ridge: f64) -> Result<GaussianModel> {
    let projected: Vec<Vec<f64>> = data
        .class_vectors(crate::data::Label::Target)
        .into_iter()
        .map(|x| head.project(x))
        .collect();
    fit_gaussian(&projected, ridge)
}

/// Trains on `splits.train` and picks the threshold on `splits.dev`.
pub fn fit(splits: &Splits, cfg: &PipelineConfig) -> Result<FittedPipeline> {
    let untrained = train(&splits.train, &TrainConfig { epochs: 0, ..cfg.train.clone() })?;
    let outcome = train(&splits.train, &cfg.train)?;
    let model = if cfg.window_stats {
        outcome.model
    } else {
        refit_model(&splits.train, &outcome.head, cfg.train.ridge)?
    };
    let dev = outcome.head.project_dataset(&splits.dev)?;
    let threshold = match cfg.threshold {
        ThresholdChoice::Fixed(beta) => DecisionThreshold::for_model(&model, beta)?,
        ThresholdChoice::Calibrate(objective) => calibrate(&model, &dev, objective)?.threshold,
    };
    let mlp = match cfg.decision {
        DecisionKind::Beta => None,
        DecisionKind::Mlp => Some(train_mlp(
            &splits.train,
            &outcome.head,
            &MlpConfig {
                epochs: cfg.mlp_epochs,
                seed: cfg.train.seed,
                ..MlpConfig::default()
            },
        )?),
    };
    let artifact = ModelArtifact {
        head: outcome.head,
        model,
        threshold,
        mlp,
        provenance: Provenance::new(cfg.train.seed, &cfg.canonical()),
    };
    let (_, dev_report) = evaluate(&artifact, &splits.dev)?;
    Ok(FittedPipeline {
        artifact,
        dev_report,
        log: outcome.log,
        initial_head: untrained.head,
        initial_model: untrained.model,
    })
}

/// Splits `data` with the training seed, then [`fit`]s.
pub fn fit_dataset(data: &EmbeddingDataset, cfg: &PipelineConfig) -> Result<(Splits, FittedPipeline)> {
    let splits = split(data, DEFAULT_SPLIT_RATIOS, cfg.train.seed)?;
    let fitted = fit(&splits, cfg)?;
    Ok((splits, fitted))
}

/// Labels every instance and scores the result, with ROC-AUC when both
/// classes are present.
pub fn evaluate(artifact: &ModelArtifact, data: &EmbeddingDataset) -> Result<(Vec<Inference>, MetricsReport)> {
    let inferences = data
        .records()
        .iter()
        .map(|r| artifact.infer(&r.vector))
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<_> = inferences.iter().map(|i| i.label).collect();
    let truth = data.labels();
    let report = score(&predicted, &truth)?;
    let ranking: Vec<f64> = inferences.iter().map(ModelArtifact::ranking_score).collect();
    let report = match roc_auc(&ranking, &truth) {
        Ok(auc) => report.with_auc(auc),
        Err(Error::SingleClass) => report,
        Err(e) => return Err(e),
    };
    Ok((inferences, report))
}
