//! Distributional diagnostics for class embeddings: PCA, Henze-Zirkler and
//! Anderson-Darling normality statistics, Q-Q pairs and distance reports.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{EmbeddingDataset, Label};
use crate::linalg::{cholesky, symmetric_eigen, GaussianModel, SymMatrix};
use crate::mahalanobis::sq_mahalanobis;
use crate::trainer::ProjectionHead;
use crate::{Error, Result};

/// Default number of principal components kept for normality tests.
pub const DEFAULT_COMPONENTS: usize = 3;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    /// Unit principal directions, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    /// Input points in component coordinates.
    pub reduced: Vec<Vec<f64>>,
    /// Set when fewer than `k` directions carry variance; the remaining
    /// coordinates are zero.
    pub rank_deficient: bool,
}

/// Projects centred data onto the top `k` principal directions of the
/// sample covariance.
pub fn pca_reduce<V: AsRef<[f64]>>(points: &[V], k: usize) -> Result<PcaResult> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let d = points[0].as_ref().len();
    if k == 0 || k > d {
        return Err(Error::InvalidComponents(format!(
            "k = {k} must lie in 1..={d}"
        )));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::dim(d, p.len()));
        }
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = SymMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = centred.iter().map(|c| c[i] * c[j]).sum();
            cov.set(i, j, s / (n - 1) as f64);
        }
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let trace: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let tol = values[0].abs().max(f64::MIN_POSITIVE) * 1e-12 * d as f64;
    let kept = values.iter().take(k).take_while(|&&v| v > tol).count();
    let rank_deficient = kept < k || k > n - 1;
    let components: Vec<Vec<f64>> = vectors.into_iter().take(k).collect();
    let explained_variance_ratio = values
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, v)| if i < kept && trace > 0.0 { v / trace } else { 0.0 })
        .collect();
    let reduced = centred
        .iter()
        .map(|c| {
            components
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    if i < kept {
                        u.iter().zip(c).map(|(a, b)| a * b).sum()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(PcaResult {
        mean,
        components,
        explained_variance_ratio,
        reduced,
        rank_deficient,
    })
}

/// Henze-Zirkler statistic of a sample standardised with its maximum
/// likelihood covariance, with the usual smoothing
/// `β = ((n(2d + 1)) / 4)^(1/(d + 4)) / √2`.
pub fn henze_zirkler<V: AsRef<[f64]>>(points: &[V]) -> Result<f64> {
    let n = points.len();
    let d = points.first().map_or(0, |p| p.as_ref().len());
    if d == 0 || n <= d {
        return Err(Error::SingularCovariance);
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::dim(d, p.len()));
        }
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v / nf);
    }
    let centred: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_ref().iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = SymMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            cov.set(i, j, centred.iter().map(|c| c[i] * c[j]).sum::<f64>() / nf);
        }
    }
    let chol = cholesky(&cov).map_err(|_| Error::SingularCovariance)?;
    let white: Vec<Vec<f64>> = centred
        .into_iter()
        .map(|mut c| {
            chol.forward_substitute(&mut c);
            c
        })
        .collect();

    let df = d as f64;
    let beta = (nf * (2.0 * df + 1.0) / 4.0).powf(1.0 / (df + 4.0)) / 2f64.sqrt();
    let b2 = beta * beta;
    let mut pair_sum = 0.0;
    for (i, wi) in white.iter().enumerate() {
        // diagonal terms are exp(0) = 1, off-diagonal ones appear twice
        pair_sum += 1.0;
        for wj in &white[..i] {
            let dij: f64 = wi.iter().zip(wj).map(|(a, b)| (a - b) * (a - b)).sum();
            pair_sum += 2.0 * (-0.5 * b2 * dij).exp();
        }
    }
    let single_sum: f64 = white
        .iter()
        .map(|w| {
            let di: f64 = w.iter().map(|v| v * v).sum();
            (-b2 / (2.0 * (1.0 + b2)) * di).exp()
        })
        .sum();
    Ok(pair_sum / nf - 2.0 * (1.0 + b2).powf(-df / 2.0) * single_sum
        + nf * (1.0 + 2.0 * b2).powf(-df / 2.0))
}

/// `A² = −n − (1/n) Σ (2i − 1) [ln p_(i) + ln(1 − p_(n+1−i))]` for
/// probabilities already sorted ascending.
pub fn anderson_darling_from_probs(sorted_probs: &[f64]) -> Result<f64> {
    let n = sorted_probs.len();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some(&p) = sorted_probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::OutOfDomain {
            value: p,
            domain: "(0, 1)",
        });
    }
    let s: f64 = (0..n)
        .map(|i| {
            (2 * i + 1) as f64 * (sorted_probs[i].ln() + (1.0 - sorted_probs[n - 1 - i]).ln())
        })
        .sum();
    Ok(-(n as f64) - s / n as f64)
}

fn standardise(samples: &[f64]) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// Anderson-Darling statistic against a normal law with estimated mean and
/// standard deviation; no small-sample correction.
pub fn anderson_darling(samples: &[f64]) -> Result<f64> {
    let z = standardise(samples)?;
    let n = z.len();
    let phi = std_normal();
    // upper tails come from Φ(−z) to keep precision for large |z|
    let s: f64 = (0..n)
        .map(|i| {
            let lower = phi.cdf(z[i]).max(f64::MIN_POSITIVE).ln();
            let upper = phi.cdf(-z[n - 1 - i]).max(f64::MIN_POSITIVE).ln();
            (2 * i + 1) as f64 * (lower + upper)
        })
        .sum();
    Ok(-(n as f64) - s / n as f64)
}

/// `(theoretical, sample)` quantile pairs: normal quantiles at plotting
/// positions `(i − 0.5)/n` against the sorted standardised sample.
pub fn emit_qq(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let z = standardise(samples)?;
    let n = z.len() as f64;
    let phi = std_normal();
    Ok(z
        .into_iter()
        .enumerate()
        .map(|(i, s)| (phi.inverse_cdf((i as f64 + 0.5) / n), s))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub label: Label,
    pub n: usize,
    pub k: usize,
    pub hz: f64,
    pub ad_per_dim: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub rank_deficient: bool,
    /// Reduced coordinates, kept for Q-Q output.
    pub reduced: Vec<Vec<f64>>,
}

impl NormalityReport {
    pub fn mean_ad(&self) -> f64 {
        self.ad_per_dim.iter().sum::<f64>() / self.ad_per_dim.len() as f64
    }
}

fn class_report(label: Label, points: &[Vec<f64>], k: usize) -> Result<NormalityReport> {
    if points.len() <= k {
        return Err(Error::InsufficientSamples {
            n: points.len(),
            required: k + 1,
        });
    }
    let pca = pca_reduce(points, k)?;
    let hz = henze_zirkler(&pca.reduced)?;
    let ad_per_dim = (0..k)
        .map(|j| {
            let column: Vec<f64> = pca.reduced.iter().map(|r| r[j]).collect();
            anderson_darling(&column)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalityReport {
        label,
        n: points.len(),
        k,
        hz,
        ad_per_dim,
        explained_variance_ratio: pca.explained_variance_ratio,
        rank_deficient: pca.rank_deficient,
        reduced: pca.reduced,
    })
}

/// Projects each class, reduces it to `k` principal components and
/// computes its normality statistics. Target report first.
pub fn normality_report(
    data: &EmbeddingDataset,
    head: &ProjectionHead,
    k: usize,
) -> Result<Vec<NormalityReport>> {
    let projected = head.project_dataset(data)?;
    [Label::Target, Label::NonTarget]
        .into_iter()
        .map(|label| {
            let pts: Vec<Vec<f64>> = projected
                .class_vectors(label)
                .into_iter()
                .map(<[f64]>::to_vec)
                .collect();
            class_report(label, &pts, k)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRecord {
    pub id: String,
    pub label: Label,
    pub d2: f64,
}

/// Squared Mahalanobis distance of every projected instance, sorted by id.
pub fn emit_distance_report(
    data: &EmbeddingDataset,
    head: &ProjectionHead,
    model: &GaussianModel,
) -> Result<Vec<DistanceRecord>> {
    if head.d_out() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: head.d_out(),
            context: Some("projection output vs model".into()),
        });
    }
    if data.d_in() != head.d_in() {
        return Err(Error::DimensionMismatch {
            expected: head.d_in(),
            got: data.d_in(),
            context: Some("dataset vs projection input".into()),
        });
    }
    let mut out = data
        .records()
        .iter()
        .map(|r| {
            Ok(DistanceRecord {
                id: r.id.clone(),
                label: r.label,
                d2: sq_mahalanobis(model, &head.project(&r.vector))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Mean target and non-target distance in a report, in that order.
pub fn class_mean_distances(report: &[DistanceRecord]) -> (f64, f64) {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for r in report {
        let i = usize::from(!r.label.is_target());
        sums[i] += r.d2;
        counts[i] += 1;
    }
    (sums[0] / counts[0] as f64, sums[1] / counts[1] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EmbeddingRecord;
    use crate::linalg::fit_gaussian;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    /// HZ straight from the definition with an explicit inverse.
    fn hz_oracle(points: &[Vec<f64>]) -> f64 {
        let n = points.len();
        let d = points[0].len();
        let x = DMatrix::from_fn(n, d, |i, j| points[i][j]);
        let mean = x.row_mean();
        let c = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let s = c.transpose() * &c / n as f64;
        let s_inv = s.try_inverse().unwrap();
        let row = |i: usize| DVector::from_fn(d, |j, _| c[(i, j)]);
        let (nf, df) = (n as f64, d as f64);
        let b = (nf * (2.0 * df + 1.0) / 4.0).powf(1.0 / (df + 4.0)) / 2f64.sqrt();
        let b2 = b * b;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = row(i) - row(j);
                total += (-b2 / 2.0 * (diff.transpose() * &s_inv * &diff)[0]).exp();
            }
        }
        let mut single = 0.0;
        for i in 0..n {
            let r = row(i);
            single += (-b2 / (2.0 * (1.0 + b2)) * (r.transpose() * &s_inv * &r)[0]).exp();
        }
        total / nf - 2.0 * (1.0 + b2).powf(-df / 2.0) * single + nf * (1.0 + 2.0 * b2).powf(-df / 2.0)
    }

    #[test]
    fn hz_matches_direct_formula_and_detects_skew() {
        let pts = gaussian_cloud(200, 3, 17);
        let s1 = henze_zirkler(&pts).unwrap();
        assert!((s1 - hz_oracle(&pts)).abs() < 1e-9 * s1.abs().max(1.0));
        let cubed: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0].powi(3), p[1], p[2]]).collect();
        let s2 = henze_zirkler(&cubed).unwrap();
        assert!((s2 - hz_oracle(&cubed)).abs() < 1e-9 * s2.abs().max(1.0));
        assert!(s2 > s1, "{s2} vs {s1}");
        assert!(matches!(
            henze_zirkler(&gaussian_cloud(3, 3, 1)),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn ad_formula_examples() {
        let a = anderson_darling_from_probs(&[0.25, 0.75]).unwrap();
        assert!((a - 0.249341).abs() < 5e-7, "{a}");
        // {−1, 1}: sd √2, so p = Φ(∓1/√2)
        let p = 0.760_249_938_906_523_3;
        let expected = anderson_darling_from_probs(&[1.0 - p, p]).unwrap();
        assert!((anderson_darling(&[-1.0, 1.0]).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(anderson_darling(&[2.0; 5]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn qq_examples() {
        let pairs = emit_qq(&[1.0, -1.0]).unwrap();
        let q = 0.674_489_750_196_081_7;
        assert!((pairs[0].0 + q).abs() < 1e-12 && (pairs[1].0 - q).abs() < 1e-12);
        assert!(matches!(emit_qq(&[0.0, 0.0]), Err(Error::ZeroVariance)));

        // normal scores standardise to a positive multiple of themselves
        let n = 50;
        let phi = std_normal();
        let scores: Vec<f64> = (0..n).map(|i| phi.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let pairs = emit_qq(&scores).unwrap();
        let sd = (scores.iter().map(|s| s * s).sum::<f64>() / (n - 1) as f64).sqrt();
        for (t, s) in pairs {
            assert!((t / sd - s).abs() < 1e-9);
        }
    }

    #[test]
    fn pca_forced_axis_and_subspace() {
        let r = pca_reduce(&[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]], 1).unwrap();
        let axis = &r.components[0];
        let expect = [1.0 / 2f64.sqrt(), 0.0, -1.0 / 2f64.sqrt()];
        let dot: f64 = axis.iter().zip(&expect).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
        assert!((r.explained_variance_ratio[0] - 1.0).abs() < 1e-12);

        // points in a 2-D affine plane of R^4 reconstruct exactly from k = 2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let origin = [1.0, -2.0, 0.5, 3.0];
        let u = [0.5, 0.5, 0.5, 0.5];
        let v = [0.5, -0.5, 0.5, -0.5];
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0));
                (0..4).map(|j| origin[j] + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let r = pca_reduce(&pts, 2).unwrap();
        assert!(!r.rank_deficient);
        for (p, z) in pts.iter().zip(&r.reduced) {
            for j in 0..4 {
                let back = r.mean[j] + z[0] * r.components[0][j] + z[1] * r.components[1][j];
                assert!((back - p[j]).abs() < 1e-10);
            }
        }
        let r3 = pca_reduce(&pts, 3).unwrap();
        assert!(r3.rank_deficient);
        assert!(r3.reduced.iter().all(|z| z[2] == 0.0));
        assert!(matches!(pca_reduce(&pts, 5), Err(Error::InvalidComponents(_))));
    }

    #[test]
    fn pca_ratios_match_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scales = [3.0, 2.0, 1.0, 0.5, 0.25];
        let pts: Vec<Vec<f64>> = (0..80)
            .map(|_| scales.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let r = pca_reduce(&pts, 3).unwrap();
        let x = DMatrix::from_fn(80, 5, |i, j| pts[i][j]);
        let mean = x.row_mean();
        let c = DMatrix::from_fn(80, 5, |i, j| x[(i, j)] - mean[j]);
        let cov = c.transpose() * &c / 79.0;
        let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let tr: f64 = ev.iter().sum();
        for (got, want) in r.explained_variance_ratio.iter().zip(&ev) {
            assert!((got - want / tr).abs() < 1e-10);
        }
    }

    fn two_class(seed: u64) -> EmbeddingDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        for i in 0..400 {
            let target = i < 200;
            let v: Vec<f64> = (0..4)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    if target {
                        z
                    } else {
                        z + if rng.gen_bool(0.5) { 6.0 } else { -6.0 }
                    }
                })
                .collect();
            recs.push(EmbeddingRecord {
                id: format!("{:03}", 399 - i),
                label: if target { Label::Target } else { Label::NonTarget },
                vector: v,
            });
        }
        EmbeddingDataset::new(recs).unwrap()
    }

    #[test]
    fn report_orders_gaussian_below_mixture() {
        let data = two_class(2);
        let head = ProjectionHead::identity(4);
        let reps = normality_report(&data, &head, 3).unwrap();
        assert_eq!(reps[0].label, Label::Target);
        assert!(reps[0].hz < reps[1].hz);
        assert!(reps[0].mean_ad() < reps[1].mean_ad());
        assert_eq!(reps, normality_report(&data, &head, 3).unwrap());

        let small = EmbeddingDataset::new(data.records()[..2].iter().chain(&data.records()[300..]).cloned().collect()).unwrap();
        assert!(matches!(
            normality_report(&small, &head, 3),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn distance_report_contract() {
        let data = two_class(5);
        let head = ProjectionHead::identity(4);
        let model = fit_gaussian(&data.class_vectors(Label::Target), 1e-6).unwrap();
        let rep = emit_distance_report(&data, &head, &model).unwrap();
        assert_eq!(rep.len(), data.len());
        assert!(rep.windows(2).all(|w| w[0].id < w[1].id));
        for r in &rep {
            let rec = data.records().iter().find(|x| x.id == r.id).unwrap();
            assert_eq!(r.d2, sq_mahalanobis(&model, &rec.vector).unwrap());
        }
        let at_mean = sq_mahalanobis(&model, model.mean()).unwrap();
        assert_eq!(at_mean, 0.0);
        let wrong = ProjectionHead::identity(3);
        assert!(emit_distance_report(&data, &wrong, &model).is_err());
    }

    proptest! {
        #[test]
        fn ad_uniform_scores_closed_form(n in 1usize..300) {
            let probs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            let closed = -(n as f64)
                - 2.0 / n as f64
                    * (1..=n).map(|i| (2 * i - 1) as f64 * ((i as f64 - 0.5) / n as f64).ln()).sum::<f64>();
            let got = anderson_darling_from_probs(&probs).unwrap();
            prop_assert!((got - closed).abs() <= 1e-12 * closed.abs().max(1.0));
        }

        #[test]
        fn pca_ratios_bounded_and_translation_invariant(
            seed in any::<u64>(),
            shift in prop::collection::vec(-100.0f64..100.0, 4),
        ) {
            let pts = gaussian_cloud(25, 4, seed);
            let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
            let a = pca_reduce(&pts, 3).unwrap();
            let b = pca_reduce(&moved, 3).unwrap();
            prop_assert!(a.explained_variance_ratio.iter().sum::<f64>() <= 1.0 + 1e-12);
            prop_assert!(a.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
            for (x, y) in a.explained_variance_ratio.iter().zip(&b.explained_variance_ratio) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
