//! Contrastive losses over projected embeddings and their gradients.
//!
//! The Gaussian statistics used by the Mahalanobis losses are treated as
//! constants: gradients flow only through the projected coordinates.

use std::str::FromStr;

use crate::linalg::GaussianModel;
use crate::{Error, Result};

/// Clamp applied to similarities inside the logarithms of the mean loss.
pub const LOG_CLAMP: f64 = 1e-12;

/// Anchor and positive from the target class, negative from the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastTriple {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Batch loss and its gradient with respect to every input vector.
///
/// `positive_grads` is empty for the mean loss, which has no positives.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub anchor_grads: Vec<Vec<f64>>,
    pub positive_grads: Vec<Vec<f64>>,
    pub negative_grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Ratio of Mahalanobis similarities over triples.
    Mah,
    /// Log-likelihood-style loss against the target mean.
    MahMean,
    /// Ratio loss with the cosine similarity mapped into `[0, 1]`.
    Cosine,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Mah, LossKind::MahMean, LossKind::Cosine];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mah => "mah",
            LossKind::MahMean => "mah-mean",
            LossKind::Cosine => "cosine",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mah" => Ok(LossKind::Mah),
            "mah-mean" | "mah_mean" => Ok(LossKind::MahMean),
            "cosine" => Ok(LossKind::Cosine),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss {other:?} (expected mah, mah-mean or cosine)"
            ))),
        }
    }
}

/// Evaluates `kind` on a batch; the mean loss pairs each anchor with its
/// negative and ignores positives.
pub fn evaluate(kind: LossKind, batch: &[ContrastTriple], model: &GaussianModel) -> Result<LossValue> {
    match kind {
        LossKind::Mah => mah_loss(batch, model),
        LossKind::MahMean => {
            let targets: Vec<&[f64]> = batch.iter().map(|t| t.anchor.as_slice()).collect();
            let negatives: Vec<&[f64]> = batch.iter().map(|t| t.negative.as_slice()).collect();
            mah_mean_loss(&targets, &negatives, model)
        }
        LossKind::Cosine => cosine_loss(batch),
    }
}

fn check_triple_dims(t: &ContrastTriple, d: usize) -> Result<()> {
    for v in [&t.anchor, &t.positive, &t.negative] {
        if v.len() != d {
            return Err(Error::dim(d, v.len()));
        }
    }
    Ok(())
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// Quadratic form `q = δᵀ Σ⁻¹ δ` and the solved vector `Σ⁻¹ δ`.
fn mahalanobis_parts(model: &GaussianModel, delta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let solved = model.spd_solve(delta)?;
    Ok((dot(delta, &solved).max(0.0), solved))
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean over triples of `sim(x, y⁻) / (sim(x, x⁺) + sim(x, y⁻))` with
/// `sim(u, v) = exp(−(u − v)ᵀ Σ⁻¹ (u − v) / d)`.
pub fn mah_loss(batch: &[ContrastTriple], model: &GaussianModel) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = model.dim();
    let df = d as f64;
    let scale = 1.0 / batch.len() as f64;
    let mut out = LossValue {
        value: 0.0,
        anchor_grads: Vec::with_capacity(batch.len()),
        positive_grads: Vec::with_capacity(batch.len()),
        negative_grads: Vec::with_capacity(batch.len()),
    };
    for t in batch {
        check_triple_dims(t, d)?;
        let (q_pos, p_pos) = mahalanobis_parts(model, &diff(&t.anchor, &t.positive))?;
        let (q_neg, p_neg) = mahalanobis_parts(model, &diff(&t.anchor, &t.negative))?;
        // s_n / (s_p + s_n) = logistic((q_p − q_n) / d)
        let term = logistic((q_pos - q_neg) / df);
        out.value += scale * term;
        let slope = scale * term * (1.0 - term) / df;
        // ∂q/∂x = 2 Σ⁻¹ (x − y)
        let g_pos = scaled(&p_pos, 2.0 * slope);
        let g_neg = scaled(&p_neg, -2.0 * slope);
        out.anchor_grads
            .push(g_pos.iter().zip(&g_neg).map(|(a, b)| a + b).collect());
        out.positive_grads.push(scaled(&g_pos, -1.0));
        out.negative_grads.push(scaled(&g_neg, -1.0));
    }
    Ok(out)
}

/// `−mean[log sim(μ, x) + log(1 − sim(μ, y⁻))]` over paired targets and
/// negatives, with both similarities clamped to `[ε, 1 − ε]`.
pub fn mah_mean_loss<V: AsRef<[f64]>>(
    targets: &[V],
    negatives: &[V],
    model: &GaussianModel,
) -> Result<LossValue> {
    if targets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if targets.len() != negatives.len() {
        return Err(Error::LengthMismatch {
            left: targets.len(),
            right: negatives.len(),
        });
    }
    let d = model.dim();
    let df = d as f64;
    let scale = 1.0 / targets.len() as f64;
    let max_q = -LOG_CLAMP.ln() * df;
    let mut out = LossValue {
        value: 0.0,
        anchor_grads: Vec::with_capacity(targets.len()),
        positive_grads: Vec::new(),
        negative_grads: Vec::with_capacity(targets.len()),
    };
    for (x, y) in targets.iter().zip(negatives) {
        let (x, y) = (x.as_ref(), y.as_ref());
        if x.len() != d || y.len() != d {
            return Err(Error::dim(d, x.len().max(y.len())));
        }

        // −log sim(μ, x) = q / d, inside the clamp band
        let (q_x, p_x) = mahalanobis_parts(model, &diff(x, model.mean()))?;
        let sim_x = (-q_x / df).exp();
        let (term_x, slope_x) = if q_x > max_q {
            (-LOG_CLAMP.ln(), 0.0)
        } else if sim_x > 1.0 - LOG_CLAMP {
            (-(1.0 - LOG_CLAMP).ln(), 0.0)
        } else {
            (q_x / df, 1.0 / df)
        };
        out.anchor_grads.push(scaled(&p_x, 2.0 * scale * slope_x));

        // −log(1 − sim(μ, y)), with 1 − sim = −expm1(−q / d)
        let (q_y, p_y) = mahalanobis_parts(model, &diff(y, model.mean()))?;
        let sim_y = (-q_y / df).exp();
        let one_minus = -(-q_y / df).exp_m1();
        let (term_y, slope_y) = if one_minus < LOG_CLAMP {
            (-LOG_CLAMP.ln(), 0.0)
        } else if sim_y < LOG_CLAMP {
            (-(1.0 - LOG_CLAMP).ln(), 0.0)
        } else {
            (-one_minus.ln(), -(sim_y / df) / one_minus)
        };
        out.negative_grads.push(scaled(&p_y, 2.0 * scale * slope_y));

        out.value += scale * (term_x + term_y);
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `cos(u, v)` and its gradients with respect to `u` and `v`.
fn cosine_parts(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = dot(u, v) / (nu * nv);
    let gu = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - c * a / (nu * nu))
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - c * b / (nv * nv))
        .collect();
    Ok((c, gu, gv))
}

/// The ratio loss with `sim(u, v) = (1 + cos(u, v)) / 2`. A triple whose
/// similarities are both zero contributes `1/2` with zero gradient.
pub fn cosine_loss(batch: &[ContrastTriple]) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = batch[0].anchor.len();
    let scale = 1.0 / batch.len() as f64;
    let mut out = LossValue {
        value: 0.0,
        anchor_grads: Vec::with_capacity(batch.len()),
        positive_grads: Vec::with_capacity(batch.len()),
        negative_grads: Vec::with_capacity(batch.len()),
    };
    for t in batch {
        check_triple_dims(t, d)?;
        let (c_pos, gx_pos, gp) = cosine_parts(&t.anchor, &t.positive)?;
        let (c_neg, gx_neg, gn) = cosine_parts(&t.anchor, &t.negative)?;
        let s_pos = 0.5 * (1.0 + c_pos);
        let s_neg = 0.5 * (1.0 + c_neg);
        let total = s_pos + s_neg;
        if total <= 0.0 {
            out.value += 0.5 * scale;
            out.anchor_grads.push(vec![0.0; d]);
            out.positive_grads.push(vec![0.0; d]);
            out.negative_grads.push(vec![0.0; d]);
            continue;
        }
        out.value += scale * s_neg / total;
        // ∂/∂s_p = −s_n / S², ∂/∂s_n = s_p / S², and ∂s/∂cos = 1/2
        let w_pos = -scale * 0.5 * s_neg / (total * total);
        let w_neg = scale * 0.5 * s_pos / (total * total);
        out.anchor_grads.push(
            gx_pos
                .iter()
                .zip(&gx_neg)
                .map(|(a, b)| w_pos * a + w_neg * b)
                .collect(),
        );
        out.positive_grads.push(scaled(&gp, w_pos));
        out.negative_grads.push(scaled(&gn, w_neg));
    }
    Ok(out)
}
