//! Synthetic benchmark: a compact Gaussian target class near a
//! low-dimensional affine manifold against a heterogeneous background.
//!
//! Both classes are generated in "whitened target coordinates" `z` and
//! mapped into the embedding space by one affine map `x = μ + A z`, with
//! `A = [U·diag(λ) | t·V]`: `U` spans the manifold, `λ` are the manifold
//! scales, `V` spans the orthogonal complement and `t` is the thickness of
//! the target around its manifold.
//!
//! - target: `z ~ N(0, I)`.
//! - non-target components: `z ~ N(m_c, s_c² I)` with `‖m_c‖` between
//!   `separation` and `1.5·separation` and scales `s_c` in `[1, 1.5]`.
//! - background (a fifth of the non-target points): `z` uniform in the cube
//!   `[−separation, separation]^d`.
//!
//! As `separation` grows every non-target point leaves any fixed
//! Mahalanobis ball around the target mean.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{EmbeddingDataset, EmbeddingRecord, Label};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub d_in: usize,
    /// Dimension of the target manifold.
    pub manifold_dim: usize,
    pub n_target: usize,
    pub m_non_target: usize,
    /// Gaussian components in the non-target mixture (at least 2).
    pub components: usize,
    /// Distance of the non-target structure from the target, in target
    /// standard deviations.
    pub separation: f64,
    /// Spread of the target off its manifold, relative to the manifold scales.
    pub thickness: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d_in: 32,
            manifold_dim: 8,
            n_target: 2_000,
            m_non_target: 8_000,
            components: 4,
            separation: 7.0,
            thickness: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.d_in == 0 || self.n_target == 0 || self.m_non_target == 0 {
            return bad("sizes must be positive".into());
        }
        if self.manifold_dim == 0 || self.manifold_dim > self.d_in {
            return bad(format!(
                "manifold dimension {} must lie in 1..={}",
                self.manifold_dim, self.d_in
            ));
        }
        if self.components < 2 {
            return bad(format!("need at least 2 components, got {}", self.components));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad(format!("separation must be positive, got {}", self.separation));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return bad(format!("thickness must be positive, got {}", self.thickness));
        }
        Ok(())
    }

    /// Configured target mean and the columns of the map `A`.
    pub fn target_geometry(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.validate()?;
        let mut rng = rng::stream(self.seed, "synth/geometry");
        Ok(geometry(self, &mut rng))
    }
}

fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Random orthonormal basis of R^d (modified Gram-Schmidt).
fn orthonormal_basis<R: Rng>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v = unit_vector(rng, d);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn geometry<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = cfg.d_in;
    let k = cfg.manifold_dim;
    let mean: Vec<f64> = unit_vector(rng, d).into_iter().map(|x| 3.0 * x).collect();
    let basis = orthonormal_basis(rng, d);
    let columns = basis
        .into_iter()
        .enumerate()
        .map(|(j, col)| {
            let scale = if j < k {
                // manifold scales from 2 down to 0.5
                if k == 1 {
                    1.0
                } else {
                    2.0 - 1.5 * j as f64 / (k - 1) as f64
                }
            } else {
                cfg.thickness
            };
            col.into_iter().map(|x| x * scale).collect()
        })
        .collect();
    (mean, columns)
}

fn embed(mean: &[f64], columns: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let mut x = mean.to_vec();
    for (zj, col) in z.iter().zip(columns) {
        for (xi, cij) in x.iter_mut().zip(col) {
            *xi += zj * cij;
        }
    }
    x
}

/// Generates the benchmark described in the module docs. Records are
/// shuffled and given zero-padded sequential ids.
pub fn synth_benchmark(cfg: &SynthConfig) -> Result<EmbeddingDataset> {
    cfg.validate()?;
    let d = cfg.d_in;
    let mut geo_rng = rng::stream(cfg.seed, "synth/geometry");
    let (mean, columns) = geometry(cfg, &mut geo_rng);

    let mut rng = rng::stream(cfg.seed, "synth/samples");
    let comp_means: Vec<Vec<f64>> = (0..cfg.components)
        .map(|c| {
            let radius = cfg.separation * (1.0 + 0.5 * c as f64 / (cfg.components - 1) as f64);
            unit_vector(&mut rng, d).into_iter().map(|x| radius * x).collect()
        })
        .collect();
    let comp_scales: Vec<f64> = (0..cfg.components)
        .map(|c| 1.0 + 0.5 * c as f64 / (cfg.components - 1) as f64)
        .collect();

    let mut rows: Vec<(Label, Vec<f64>)> = Vec::with_capacity(cfg.n_target + cfg.m_non_target);
    for _ in 0..cfg.n_target {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        rows.push((Label::Target, embed(&mean, &columns, &z)));
    }
    let n_background = cfg.m_non_target / 5;
    for i in 0..cfg.m_non_target {
        let z: Vec<f64> = if i < n_background {
            (0..d)
                .map(|_| rng.gen_range(-cfg.separation..cfg.separation))
                .collect()
        } else {
            let c = (i - n_background) % cfg.components;
            comp_means[c]
                .iter()
                .map(|m| m + comp_scales[c] * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        rows.push((Label::NonTarget, embed(&mean, &columns, &z)));
    }
    rows.shuffle(&mut rng);
    let width = (rows.len().max(2) - 1).to_string().len().max(6);
    EmbeddingDataset::new(
        rows.into_iter()
            .enumerate()
            .map(|(i, (label, vector))| EmbeddingRecord {
                id: format!("{i:0width$}"),
                label,
                vector,
            })
            .collect(),
    )
}
