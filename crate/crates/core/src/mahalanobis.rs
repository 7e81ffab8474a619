//! Squared Mahalanobis distance, the Mahalanobis similarity kernel, and the
//! Beta-law decision rule.
//!
//! A query `x` is scored against a frozen model of `n` target points by
//! appending it to the statistics, measuring its squared distance `d²` to
//! the updated mean under the updated covariance, and normalising with the
//! new sample size `N = n + 1`:
//!
//! ```text
//! T = N / (N - 1)² · d² = (n + 1) / n² · d²
//! ```
//!
//! For Gaussian data a point that is part of its own sample of size `N`
//! gives `T ~ Beta(d/2, (N - d - 1)/2)`, which is `Beta(d/2, (n - d)/2)` in
//! terms of the pre-append count. The query is labelled target when `T` is
//! strictly below the `β`-quantile of that law.

use crate::betadist::{beta_quantile, reg_inc_beta, BetaParams};
use crate::data::{EmbeddingDataset, Label};
use crate::linalg::GaussianModel;
use crate::{Error, Result};

/// Quantile levels are kept away from 0 and 1 so they stay representable.
pub const MIN_BETA_LEVEL: f64 = 1e-15;
pub const MAX_BETA_LEVEL: f64 = 1.0 - 1e-15;

/// `(x − μ)ᵀ (Σ + ridge·I)⁻¹ (x − μ)`.
pub fn sq_mahalanobis(model: &GaussianModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::dim(model.dim(), x.len()));
    }
    let diff: Vec<f64> = x.iter().zip(model.mean()).map(|(a, m)| a - m).collect();
    model.inverse_quad_form(&diff)
}

/// `exp(−(x − y)ᵀ Σ⁻¹ (x − y) / d)`.
pub fn sim_mah(model: &GaussianModel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != model.dim() || y.len() != model.dim() {
        return Err(Error::dim(model.dim(), x.len().max(y.len())));
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let q = model.inverse_quad_form(&diff)?;
    Ok((-q / model.dim() as f64).exp())
}

/// Squared distance of a query and its normalised Beta statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionScore {
    pub d2: f64,
    pub t: f64,
}

/// Beta shapes `(d/2, (n − d)/2)` for a model of `n` points in `d` dims.
pub fn decision_params(n: usize, d: usize) -> Result<BetaParams> {
    if n <= d + 1 {
        return Err(Error::InsufficientSamples { n, required: d + 1 });
    }
    BetaParams::new(d as f64 / 2.0, (n - d) as f64 / 2.0)
}

/// Scores `x` with itself appended to the model statistics. The model is
/// not modified.
pub fn decision_statistic(model: &GaussianModel, x: &[f64]) -> Result<DecisionScore> {
    let (n, d) = (model.n(), model.dim());
    if x.len() != d {
        return Err(Error::dim(d, x.len()));
    }
    if n <= d + 1 {
        return Err(Error::InsufficientSamples { n, required: d + 1 });
    }
    let extended = model.append_point(x)?;
    let d2 = sq_mahalanobis(&extended, x)?;
    let nf = n as f64;
    let t = ((nf + 1.0) / (nf * nf) * d2).clamp(0.0, 1.0);
    Ok(DecisionScore { d2, t })
}

/// Quantile level `β`, the Beta law it refers to, and the critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionThreshold {
    beta_level: f64,
    params: BetaParams,
    v_beta: f64,
}

impl DecisionThreshold {
    /// Threshold at level `beta_level` for a model of `n` points in `d` dims.
    pub fn new(n: usize, d: usize, beta_level: f64) -> Result<Self> {
        let params = decision_params(n, d)?;
        Self::from_params(params, beta_level)
    }

    pub fn for_model(model: &GaussianModel, beta_level: f64) -> Result<Self> {
        Self::new(model.n(), model.dim(), beta_level)
    }

    pub fn from_params(params: BetaParams, beta_level: f64) -> Result<Self> {
        if !(beta_level > 0.0 && beta_level < 1.0) {
            return Err(Error::OutOfDomain {
                value: beta_level,
                domain: "(0, 1)",
            });
        }
        let v_beta = beta_quantile(params, beta_level)?;
        Ok(DecisionThreshold {
            beta_level,
            params,
            v_beta,
        })
    }

    /// Reassembles a stored threshold, checking the critical value.
    pub fn from_stored(params: BetaParams, beta_level: f64, v_beta: f64) -> Result<Self> {
        let fresh = Self::from_params(params, beta_level)?;
        if (fresh.v_beta - v_beta).abs() > 1e-10 {
            return Err(Error::InvalidConfig(format!(
                "stored critical value {v_beta} disagrees with quantile {} of level {beta_level}",
                fresh.v_beta
            )));
        }
        Ok(DecisionThreshold {
            beta_level,
            params,
            v_beta,
        })
    }

    pub fn beta_level(&self) -> f64 {
        self.beta_level
    }

    pub fn params(&self) -> BetaParams {
        self.params
    }

    pub fn v_beta(&self) -> f64 {
        self.v_beta
    }

    /// Errors unless the shapes match a model of this size.
    pub fn check_model(&self, model: &GaussianModel) -> Result<()> {
        let expected = decision_params(model.n(), model.dim())?;
        if expected != self.params {
            return Err(Error::ShapeMismatch {
                a: self.params.a(),
                b: self.params.b(),
                expected_a: expected.a(),
                expected_b: expected.b(),
            });
        }
        Ok(())
    }

    /// Target iff `t < v_β`.
    pub fn label_for(&self, t: f64) -> Label {
        if t < self.v_beta {
            Label::Target
        } else {
            Label::NonTarget
        }
    }
}

/// Labels `x` by comparing its statistic with the critical value.
pub fn beta_decide(model: &GaussianModel, x: &[f64], thr: &DecisionThreshold) -> Result<Label> {
    thr.check_model(model)?;
    let score = decision_statistic(model, x)?;
    Ok(thr.label_for(score.t))
}

/// What calibration optimises on the development split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationObjective {
    /// Maximise target-class F1.
    MaxF1,
    /// Maximise F1 among thresholds whose dev FPR does not exceed the cap;
    /// falls back to the lowest achievable FPR when none qualifies.
    MaxF1AtFprCap(f64),
}

/// Outcome of a calibration sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub threshold: DecisionThreshold,
    pub dev_f1: f64,
    pub dev_fpr: f64,
    /// Statistic of every dev instance, in dataset order.
    pub scores: Vec<DecisionScore>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    beta: f64,
    v: f64,
    f1: f64,
    fpr: f64,
}

/// Chooses `β` on development data.
///
/// Candidate cut points are the midpoints between consecutive distinct dev
/// statistics, one point above the largest, and the 99 levels
/// `0.01, …, 0.99`. Each cut point is mapped to its level through the Beta
/// CDF (clamped to `[MIN_BETA_LEVEL, MAX_BETA_LEVEL]`) and evaluated at the
/// quantile of that level, so the reported threshold is exactly the one
/// scored. Ties go to the smaller level.
pub fn calibrate(
    model: &GaussianModel,
    dev: &EmbeddingDataset,
    objective: CalibrationObjective,
) -> Result<Calibration> {
    let params = decision_params(model.n(), model.dim())?;
    if dev.n_target() == 0 || dev.n_non_target() == 0 {
        return Err(Error::DegenerateDevSet);
    }
    let scores = dev
        .records()
        .iter()
        .map(|r| decision_statistic(model, &r.vector))
        .collect::<Result<Vec<_>>>()?;

    let mut target_t: Vec<f64> = Vec::with_capacity(dev.n_target());
    let mut other_t: Vec<f64> = Vec::with_capacity(dev.n_non_target());
    for (r, s) in dev.records().iter().zip(&scores) {
        match r.label {
            Label::Target => target_t.push(s.t),
            Label::NonTarget => other_t.push(s.t),
        }
    }
    target_t.sort_by(f64::total_cmp);
    other_t.sort_by(f64::total_cmp);

    let mut all: Vec<f64> = scores.iter().map(|s| s.t).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();

    let mut cuts: Vec<f64> = all.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let top = *all.last().expect("dev set is nonempty");
    cuts.push(0.5 * (top + 1.0));

    let mut candidates = Vec::with_capacity(cuts.len() + 99);
    let evaluate = |beta: f64| -> Result<Candidate> {
        let v = beta_quantile(params, beta)?;
        let tp = target_t.partition_point(|&t| t < v);
        let fp = other_t.partition_point(|&t| t < v);
        let fn_ = target_t.len() - tp;
        let tn = other_t.len() - fp;
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        let fpr = fp as f64 / (fp + tn) as f64;
        Ok(Candidate { beta, v, f1, fpr })
    };
    for cut in cuts {
        let beta = reg_inc_beta(params, cut.min(1.0))?.clamp(MIN_BETA_LEVEL, MAX_BETA_LEVEL);
        candidates.push(evaluate(beta)?);
    }
    for k in 1..=99 {
        candidates.push(evaluate(k as f64 / 100.0)?);
    }

    let better = |c: &Candidate, best: &Candidate| -> bool {
        match objective {
            CalibrationObjective::MaxF1 => {
                c.f1 > best.f1 || (c.f1 == best.f1 && c.beta < best.beta)
            }
            CalibrationObjective::MaxF1AtFprCap(cap) => {
                let (ok_c, ok_b) = (c.fpr <= cap, best.fpr <= cap);
                match (ok_c, ok_b) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => c.f1 > best.f1 || (c.f1 == best.f1 && c.beta < best.beta),
                    (false, false) => {
                        c.fpr < best.fpr
                            || (c.fpr == best.fpr
                                && (c.f1 > best.f1 || (c.f1 == best.f1 && c.beta < best.beta)))
                    }
                }
            }
        }
    };
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if better(c, &best) {
            best = *c;
        }
    }
    Ok(Calibration {
        threshold: DecisionThreshold {
            beta_level: best.beta,
            params,
            v_beta: best.v,
        },
        dev_f1: best.f1,
        dev_fpr: best.fpr,
        scores,
    })
}
