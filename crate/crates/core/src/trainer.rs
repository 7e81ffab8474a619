//! Training of the projection head under a contrastive loss, with the
//! target-class statistics maintained by a sliding window, plus the
//! three-layer MLP head used for the decision-rule ablation.
//!
//! One optimisation step:
//!
//! 1. project the batch of triples with the current head;
//! 2. push the projected anchors into the window (statistics refresh every
//!    `batch_size` pushed vectors);
//! 3. evaluate the loss against the current window model;
//! 4. back-propagate through the affine head and take one Adam step.
//!
//! Before the first step every projected training target (up to window
//! capacity) is pushed once so the covariance is usable from the start.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;

use crate::data::{EmbeddingDataset, Label};
use crate::linalg::{GaussianModel, SlidingWindow, DEFAULT_RIDGE};
use crate::loss::{evaluate, ContrastTriple, LossKind};
use crate::rng;
use crate::{Error, Result};

/// Scale of the initial projection weights. Distances, similarities and
/// decisions do not depend on the overall scale of the head, so this only
/// sets how far one optimiser step moves it relative to its size.
pub const INIT_SCALE: f64 = 0.1;

/// Affine map from input embeddings to the contrast space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    d_in: usize,
    d_out: usize,
    /// Row-major `d_out × d_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ProjectionHead {
    pub fn from_parts(d_in: usize, d_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 || d_out > d_in {
            return Err(Error::InvalidConfig(format!(
                "projection must satisfy 1 <= d_out <= d_in (got d_in = {d_in}, d_out = {d_out})"
            )));
        }
        if weights.len() != d_in * d_out {
            return Err(Error::dim(d_in * d_out, weights.len()));
        }
        if bias.len() != d_out {
            return Err(Error::dim(d_out, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("projection has non-finite entries".into()));
        }
        Ok(ProjectionHead {
            d_in,
            d_out,
            weights,
            bias,
        })
    }

    pub fn identity(d: usize) -> Self {
        let mut weights = vec![0.0; d * d];
        for i in 0..d {
            weights[i * d + i] = 1.0;
        }
        ProjectionHead {
            d_in: d,
            d_out: d,
            weights,
            bias: vec![0.0; d],
        }
    }

    /// Gaussian entries with standard deviation `INIT_SCALE / √d_in`, zero
    /// bias.
    pub fn random<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, INIT_SCALE / (d_in as f64).sqrt())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let weights = (0..d_in * d_out).map(|_| normal.sample(rng)).collect();
        Self::from_parts(d_in, d_out, weights, vec![0.0; d_out])
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d_in);
        self.weights
            .chunks_exact(self.d_in)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn project_dataset(&self, data: &EmbeddingDataset) -> Result<EmbeddingDataset> {
        if data.d_in() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: data.d_in(),
                context: Some("dataset vs projection input".into()),
            });
        }
        data.map_vectors(|v| self.project(v))
    }

    fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }
}

/// Default projection width: 64, capped at half the input dimension.
pub fn default_proj_dim(d_in: usize) -> usize {
    64.min(d_in / 2).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub batch_size: usize,
    /// Window capacity is `window_multiplier × batch_size`.
    pub window_multiplier: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub ridge: f64,
    /// `None` selects [`default_proj_dim`].
    pub proj_dim: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::MahMean,
            batch_size: 16,
            window_multiplier: 100,
            learning_rate: 1e-3,
            epochs: 1,
            ridge: DEFAULT_RIDGE,
            proj_dim: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn window_capacity(&self) -> usize {
        self.window_multiplier * self.batch_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.window_multiplier == 0 || self.window_capacity() < 2 {
            return bad("window capacity must hold at least two vectors".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be nonnegative, got {}", self.ridge));
        }
        if self.proj_dim == Some(0) {
            return bad("projection dimension must be positive".into());
        }
        Ok(())
    }

    /// Canonical one-line rendering, used for provenance hashing.
    pub fn canonical(&self) -> String {
        format!(
            "loss={};batch_size={};window_multiplier={};learning_rate={:e};epochs={};ridge={:e};proj_dim={};seed={}",
            self.loss,
            self.batch_size,
            self.window_multiplier,
            self.learning_rate,
            self.epochs,
            self.ridge,
            self.proj_dim.map_or("auto".to_string(), |p| p.to_string()),
            self.seed
        )
    }
}

/// Indices of one triple into the target and non-target lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleIndex {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// One epoch of triples: every target is an anchor exactly once in random
/// order; positives are uniform over the other targets, negatives uniform
/// over the non-targets.
pub fn sample_triples<R: Rng>(
    n_target: usize,
    n_non_target: usize,
    rng: &mut R,
) -> Result<Vec<TripleIndex>> {
    if n_target < 2 || n_non_target < 1 {
        return Err(Error::InsufficientClassData(format!(
            "need >= 2 target and >= 1 non-target instances, got {n_target} and {n_non_target}"
        )));
    }
    let mut anchors: Vec<usize> = (0..n_target).collect();
    anchors.shuffle(rng);
    Ok(anchors
        .into_iter()
        .map(|anchor| {
            let mut positive = rng.gen_range(0..n_target - 1);
            if positive >= anchor {
                positive += 1;
            }
            TripleIndex {
                anchor,
                positive,
                negative: rng.gen_range(0..n_non_target),
            }
        })
        .collect())
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Updates `params` (possibly split across slices) in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: ProjectionHead,
    /// Window statistics after the last step.
    pub model: GaussianModel,
    pub log: Vec<TrainLogRecord>,
}

/// Step-wise trainer; [`train`] drives it over all epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    targets: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    head: ProjectionHead,
    window: SlidingWindow,
    adam: Adam,
    rng: rng::Rng,
    log: Vec<TrainLogRecord>,
    epoch: usize,
}

impl Trainer {
    pub fn new(data: &EmbeddingDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let targets: Vec<Vec<f64>> = data
            .class_vectors(Label::Target)
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect();
        let negatives: Vec<Vec<f64>> = data
            .class_vectors(Label::NonTarget)
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect();
        if targets.len() < 2 || negatives.is_empty() {
            return Err(Error::InsufficientClassData(format!(
                "need >= 2 target and >= 1 non-target instances, got {} and {}",
                targets.len(),
                negatives.len()
            )));
        }
        let d_in = data.d_in();
        let d_out = cfg.proj_dim.unwrap_or_else(|| default_proj_dim(d_in));
        let head = ProjectionHead::random(d_in, d_out, &mut rng::stream(cfg.seed, "train/init"))?;
        let mut window =
            SlidingWindow::new(d_out, cfg.window_capacity(), cfg.batch_size, cfg.ridge)?;
        let warm: Vec<Vec<f64>> = targets.iter().map(|x| head.project(x)).collect();
        window.push(&warm)?;
        window.refresh()?;
        let n_params = d_in * d_out + d_out;
        Ok(Trainer {
            adam: Adam::new(cfg.learning_rate, n_params),
            rng: rng::stream(cfg.seed, "train/triples"),
            cfg: cfg.clone(),
            targets,
            negatives,
            head,
            window,
            log: Vec::new(),
            epoch: 0,
        })
    }

    pub fn head(&self) -> &ProjectionHead {
        &self.head
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn model(&self) -> &GaussianModel {
        self.window
            .model()
            .expect("window is warmed with at least two vectors")
    }

    pub fn log(&self) -> &[TrainLogRecord] {
        &self.log
    }

    /// Triples for the next epoch, already chunked into batches.
    pub fn next_epoch_batches(&mut self) -> Result<Vec<Vec<TripleIndex>>> {
        let triples = sample_triples(self.targets.len(), self.negatives.len(), &mut self.rng)?;
        Ok(triples
            .chunks(self.cfg.batch_size)
            .map(<[TripleIndex]>::to_vec)
            .collect())
    }

    /// One optimisation step; returns the batch loss.
    pub fn step(&mut self, batch: &[TripleIndex]) -> Result<f64> {
        let head = &self.head;
        let projected: Vec<ContrastTriple> = batch
            .iter()
            .map(|t| ContrastTriple {
                anchor: head.project(&self.targets[t.anchor]),
                positive: head.project(&self.targets[t.positive]),
                negative: head.project(&self.negatives[t.negative]),
            })
            .collect();
        let anchors: Vec<&[f64]> = projected.iter().map(|t| t.anchor.as_slice()).collect();
        self.window.push(&anchors)?;

        let model = self
            .window
            .model()
            .expect("window is warmed with at least two vectors");
        let loss = evaluate(self.cfg.loss, &projected, model)?;
        let batch_idx = self.log.len();
        if !loss.value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                batch: batch_idx,
            });
        }

        // f = W x + b  ⇒  ∂L/∂W = Σ g xᵀ, ∂L/∂b = Σ g
        let (d_in, d_out) = (self.head.d_in, self.head.d_out);
        let mut grad_w = vec![0.0; d_in * d_out];
        let mut grad_b = vec![0.0; d_out];
        let mut accumulate = |g: &[f64], x: &[f64]| {
            for (o, go) in g.iter().enumerate() {
                grad_b[o] += go;
                let row = &mut grad_w[o * d_in..(o + 1) * d_in];
                for (slot, xi) in row.iter_mut().zip(x) {
                    *slot += go * xi;
                }
            }
        };
        for (i, t) in batch.iter().enumerate() {
            accumulate(&loss.anchor_grads[i], &self.targets[t.anchor]);
            if let Some(g) = loss.positive_grads.get(i) {
                accumulate(g, &self.targets[t.positive]);
            }
            accumulate(&loss.negative_grads[i], &self.negatives[t.negative]);
        }
        if grad_w.iter().chain(&grad_b).any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch: self.epoch,
                batch: batch_idx,
            });
        }
        let (w, b) = self.head.params_mut();
        self.adam.step(&mut [w, b], &[&grad_w, &grad_b]);

        self.log.push(TrainLogRecord {
            epoch: self.epoch,
            batch: batch_idx,
            loss: loss.value,
        });
        Ok(loss.value)
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        for batch in self.next_epoch_batches()? {
            self.step(&batch)?;
        }
        self.epoch += 1;
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        let model = self.model().clone();
        TrainOutcome {
            head: self.head,
            model,
            log: self.log,
        }
    }
}

/// Trains a projection head for `cfg.epochs` epochs over the training data.
pub fn train(data: &EmbeddingDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn xavier<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// Three affine layers with `tanh` between them, producing one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    layers: [Dense; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub epochs: usize,
    /// Hidden widths; `None` uses `(d, max(d / 2, 1))` for input width `d`.
    pub hidden: Option<(usize, usize)>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            epochs: 20,
            hidden: None,
            learning_rate: 1e-2,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpHead {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden(&self) -> (usize, usize) {
        (self.layers[0].outputs, self.layers[1].outputs)
    }

    fn forward_trace(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let input: Vec<f64> = x
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let a1: Vec<f64> = self.layers[0].forward(&input).into_iter().map(f64::tanh).collect();
        let a2: Vec<f64> = self.layers[1].forward(&a1).into_iter().map(f64::tanh).collect();
        let z = self.layers[2].forward(&a2)[0];
        (input, a1, a2, z)
    }

    /// Logit of the target class.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.forward_trace(x).3
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        if self.score(x) > 0.0 {
            Label::Target
        } else {
            Label::NonTarget
        }
    }

    /// Flat parameter list: input normalisation, then each layer's weights
    /// and bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.input_mean.clone();
        out.extend(&self.input_scale);
        for l in &self.layers {
            out.extend(&l.weights);
            out.extend(&l.bias);
        }
        out
    }

    pub fn from_flat(input: usize, hidden: (usize, usize), flat: &[f64]) -> Result<Self> {
        let sizes = [(input, hidden.0), (hidden.0, hidden.1), (hidden.1, 1)];
        let expected = 2 * input + sizes.iter().map(|(i, o)| i * o + o).sum::<usize>();
        if flat.len() != expected || input == 0 || hidden.0 == 0 || hidden.1 == 0 {
            return Err(Error::dim(expected, flat.len()));
        }
        let mut cursor = 0;
        let mut take = |n: usize| {
            let s = flat[cursor..cursor + n].to_vec();
            cursor += n;
            s
        };
        let input_mean = take(input);
        let input_scale = take(input);
        let mut build = |(i, o): (usize, usize)| Dense {
            inputs: i,
            outputs: o,
            weights: take(i * o),
            bias: take(o),
        };
        let layers = [build(sizes[0]), build(sizes[1]), build(sizes[2])];
        Ok(MlpHead {
            input_mean,
            input_scale,
            layers,
        })
    }
}

/// Trains an MLP head with binary log-loss on embeddings projected by a
/// frozen head.
pub fn train_mlp(
    data: &EmbeddingDataset,
    head: &ProjectionHead,
    cfg: &MlpConfig,
) -> Result<MlpHead> {
    if data.n_target() == 0 || data.n_non_target() == 0 {
        return Err(Error::InsufficientClassData(
            "MLP training needs both classes".into(),
        ));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidConfig("MLP batch size and rate must be positive".into()));
    }
    let projected = head.project_dataset(data)?;
    let xs: Vec<&[f64]> = projected.records().iter().map(|r| r.vector.as_slice()).collect();
    let ys: Vec<f64> = projected
        .records()
        .iter()
        .map(|r| if r.label.is_target() { 1.0 } else { 0.0 })
        .collect();
    let d = head.d_out();
    let n = xs.len() as f64;
    let input_mean: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let input_scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = xs.iter().map(|x| (x[j] - input_mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let (h1, h2) = cfg.hidden.unwrap_or((d, (d / 2).max(1)));
    let mut init = rng::stream(cfg.seed, "mlp/init");
    let mut mlp = MlpHead {
        input_mean,
        input_scale,
        layers: [
            Dense::xavier(d, h1, &mut init),
            Dense::xavier(h1, h2, &mut init),
            Dense::xavier(h2, 1, &mut init),
        ],
    };
    let n_params: usize = mlp.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
    let mut adam = Adam::new(cfg.learning_rate, n_params);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, "mlp/order");

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<(Vec<f64>, Vec<f64>)> = mlp
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (input, a1, a2, z) = mlp.forward_trace(xs[i]);
                let p = 1.0 / (1.0 + (-z).exp());
                if !p.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                let dz = scale * (p - ys[i]);
                // layer 3
                let (gw3, gb3) = &mut grads[2];
                for (g, a) in gw3.iter_mut().zip(&a2) {
                    *g += dz * a;
                }
                gb3[0] += dz;
                // layer 2
                let d2: Vec<f64> = (0..a2.len())
                    .map(|j| dz * mlp.layers[2].weights[j] * (1.0 - a2[j] * a2[j]))
                    .collect();
                let (gw2, gb2) = &mut grads[1];
                for (j, dj) in d2.iter().enumerate() {
                    gb2[j] += dj;
                    for (k, a) in a1.iter().enumerate() {
                        gw2[j * a1.len() + k] += dj * a;
                    }
                }
                // layer 1
                let w2 = &mlp.layers[1].weights;
                let d1: Vec<f64> = (0..a1.len())
                    .map(|k| {
                        let back: f64 = d2.iter().enumerate().map(|(j, dj)| dj * w2[j * a1.len() + k]).sum();
                        back * (1.0 - a1[k] * a1[k])
                    })
                    .collect();
                let (gw1, gb1) = &mut grads[0];
                for (k, dk) in d1.iter().enumerate() {
                    gb1[k] += dk;
                    for (m, x) in input.iter().enumerate() {
                        gw1[k * input.len() + m] += dk * x;
                    }
                }
            }
            let [l1, l2, l3] = &mut mlp.layers;
            adam.step(
                &mut [
                    &mut l1.weights,
                    &mut l1.bias,
                    &mut l2.weights,
                    &mut l2.bias,
                    &mut l3.weights,
                    &mut l3.bias,
                ],
                &[
                    &grads[0].0,
                    &grads[0].1,
                    &grads[1].0,
                    &grads[1].1,
                    &grads[2].0,
                    &grads[2].1,
                ],
            );
        }
    }
    Ok(mlp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EmbeddingRecord;
    use crate::linalg::fit_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(n_t: usize, n_o: usize, d: usize, shift: f64, seed: u64) -> EmbeddingDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        for i in 0..n_t + n_o {
            let label = if i < n_t { Label::Target } else { Label::NonTarget };
            let off = if label.is_target() { 0.0 } else { shift };
            recs.push(EmbeddingRecord {
                id: format!("{i:05}"),
                label,
                vector: (0..d)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) + if j == 0 { off } else { 0.0 })
                    .collect(),
            });
        }
        EmbeddingDataset::new(recs).unwrap()
    }

    #[test]
    fn forced_positive_with_two_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let t = sample_triples(2, 1, &mut rng).unwrap();
            assert_eq!(t.len(), 2);
            for tr in t {
                assert_eq!(tr.positive, 1 - tr.anchor);
                assert_eq!(tr.negative, 0);
            }
        }
        assert!(matches!(
            sample_triples(1, 4, &mut rng),
            Err(Error::InsufficientClassData(_))
        ));
    }

    #[test]
    fn triples_reproducible_and_cover_anchors() {
        let a = sample_triples(50, 7, &mut rng::stream(3, "x")).unwrap();
        let b = sample_triples(50, 7, &mut rng::stream(3, "x")).unwrap();
        assert_eq!(a, b);
        let mut anchors: Vec<usize> = a.iter().map(|t| t.anchor).collect();
        anchors.sort_unstable();
        assert_eq!(anchors, (0..50).collect::<Vec<_>>());
        assert!(a.iter().all(|t| t.positive != t.anchor && t.positive < 50 && t.negative < 7));
    }

    #[test]
    fn zero_epochs_is_warm_start_only() {
        let data = blobs(40, 60, 6, 4.0, 1);
        let cfg = TrainConfig {
            epochs: 0,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg).unwrap();
        let init = ProjectionHead::random(6, 3, &mut rng::stream(5, "train/init")).unwrap();
        assert_eq!(out.head, init);
        let projected: Vec<Vec<f64>> = data
            .class_vectors(Label::Target)
            .iter()
            .map(|x| init.project(x))
            .collect();
        assert_eq!(out.model, fit_gaussian(&projected, cfg.ridge).unwrap());
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(60, 90, 8, 3.0, 2);
        for loss in LossKind::ALL {
            let cfg = TrainConfig {
                loss,
                epochs: 2,
                seed: 11,
                ..TrainConfig::default()
            };
            let a = train(&data, &cfg).unwrap();
            let b = train(&data, &cfg).unwrap();
            assert_eq!(a.head, b.head);
            assert_eq!(a.log, b.log);
            assert_eq!(a.log.len(), 2 * 60usize.div_ceil(16));
            assert_ne!(a.head, train(&data, &TrainConfig { seed: 12, ..cfg }).unwrap().head);
        }
    }

    #[test]
    fn window_model_tracks_buffer_during_training() {
        let data = blobs(80, 80, 6, 3.0, 3);
        let cfg = TrainConfig {
            batch_size: 8,
            window_multiplier: 5,
            seed: 1,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&data, &cfg).unwrap();
        for batch in trainer.next_epoch_batches().unwrap() {
            trainer.step(&batch).unwrap();
            let buf: Vec<&[f64]> = trainer.window().buffer().collect();
            assert_eq!(buf.len(), 40);
            let refit = fit_gaussian(&buf, cfg.ridge).unwrap();
            let m = trainer.model();
            let scale = refit.cov().frobenius();
            for (a, b) in m.cov().lower().iter().zip(refit.cov().lower()) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn too_few_targets() {
        let data = blobs(1, 10, 3, 1.0, 4);
        assert!(matches!(
            train(&data, &TrainConfig::default()),
            Err(Error::InsufficientClassData(_))
        ));
    }

    #[test]
    fn absurd_learning_rate_is_reported() {
        let data = blobs(60, 60, 4, 2.0, 6);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            ridge: 0.0,
            ..TrainConfig::default()
        };
        match train(&data, &cfg) {
            Err(Error::NonFiniteLoss { .. }) | Err(Error::NotPositiveDefinite { .. }) => {}
            other => panic!("expected a numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn mlp_separates_linear_toy() {
        let data = blobs(100, 100, 2, 6.0, 7);
        let head = ProjectionHead::identity(2);
        let cfg = MlpConfig {
            epochs: 50,
            ..MlpConfig::default()
        };
        let mlp = train_mlp(&data, &head, &cfg).unwrap();
        let correct = data
            .records()
            .iter()
            .filter(|r| mlp.predict(&r.vector) == r.label)
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.99, "{correct}");
        assert_eq!(mlp, train_mlp(&data, &head, &cfg).unwrap());
    }

    #[test]
    fn mlp_zero_epochs_near_chance() {
        let data = blobs(100, 100, 2, 6.0, 8);
        let head = ProjectionHead::identity(2);
        let mlp = train_mlp(&data, &head, &MlpConfig { epochs: 0, ..MlpConfig::default() }).unwrap();
        let flat = mlp.to_flat();
        let again = MlpHead::from_flat(2, mlp.hidden(), &flat).unwrap();
        assert_eq!(again, mlp);
        let correct = data
            .records()
            .iter()
            .filter(|r| mlp.predict(&r.vector) == r.label)
            .count();
        // an untrained head is not expected to be good
        assert!((correct as f64 / data.len() as f64) < 0.99);
    }
}
