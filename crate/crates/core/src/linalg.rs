//! Dense symmetric linear algebra and Gaussian statistics.
//!
//! Symmetric matrices and Cholesky factors are stored as packed lower
//! triangles (row-major, `i * (i + 1) / 2 + j` for `j <= i`).

use std::collections::VecDeque;

use crate::{Error, Result};

/// Default diagonal regulariser added to covariance matrices.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Symmetric matrix stored as its packed lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    order: usize,
    lower: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "matrix order must be positive");
        SymMatrix {
            order,
            lower: vec![0.0; order * (order + 1) / 2],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.lower[packed_index(i, i)] = 1.0;
        }
        m
    }

    /// Builds from dense rows; only the lower triangle is read.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let order = rows.len();
        if order == 0 {
            return Err(Error::dim(1, 0));
        }
        let mut m = Self::zeros(order);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != order {
                return Err(Error::dim(order, row.len()));
            }
            for j in 0..=i {
                m.lower[packed_index(i, j)] = row[j];
            }
        }
        Ok(m)
    }

    /// Builds from a packed lower triangle of length `order * (order + 1) / 2`.
    pub fn from_lower(order: usize, lower: Vec<f64>) -> Result<Self> {
        let expected = order * (order + 1) / 2;
        if order == 0 || lower.len() != expected {
            return Err(Error::dim(expected, lower.len()));
        }
        Ok(SymMatrix { order, lower })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Packed lower triangle.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.lower[packed_index(i, j)]
        } else {
            self.lower[packed_index(j, i)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = if j <= i {
            packed_index(i, j)
        } else {
            packed_index(j, i)
        };
        self.lower[idx] = value;
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.order {
            self.lower[packed_index(i, i)] += value;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Frobenius norm of the full (not packed) matrix.
    pub fn frobenius(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.order {
            for j in 0..=i {
                let v = self.lower[packed_index(i, j)];
                acc += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        acc.sqrt()
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    order: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry `(i, j)` of `L`; zero above the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.lower[packed_index(i, j)]
        } else {
            0.0
        }
    }

    /// Solves `L y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.order;
        for i in 0..n {
            let row = &self.lower[packed_index(i, 0)..=packed_index(i, i)];
            let mut s = b[i];
            for j in 0..i {
                s -= row[j] * b[j];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn back_substitute(&self, y: &mut [f64]) {
        let n = self.order;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lower[packed_index(k, i)] * y[k];
            }
            y[i] = s / self.lower[packed_index(i, i)];
        }
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.back_substitute(&mut x);
        x
    }

    /// `bᵀ (L Lᵀ)⁻¹ b`, evaluated as `‖L⁻¹ b‖²` so the result is never negative.
    pub fn inverse_quad_form(&self, b: &[f64]) -> f64 {
        let mut y = b.to_vec();
        self.forward_substitute(&mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// `L Lᵀ` as a symmetric matrix.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.order;
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                m.set(i, j, s);
            }
        }
        m
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.order)
            .map(|i| self.lower[packed_index(i, i)].ln())
            .sum::<f64>()
    }
}

/// Cholesky–Banachiewicz factorisation of a symmetric matrix.
pub fn cholesky(m: &SymMatrix) -> Result<CholeskyFactor> {
    let n = m.order;
    let mut l = vec![0.0; m.lower.len()];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.lower[packed_index(i, j)];
            for k in 0..j {
                s -= l[packed_index(i, k)] * l[packed_index(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                l[packed_index(i, i)] = s.sqrt();
            } else {
                l[packed_index(i, j)] = s / l[packed_index(j, j)];
            }
        }
    }
    Ok(CholeskyFactor { order: n, lower: l })
}

/// Target-class Gaussian statistics with a cached Cholesky factor of
/// `cov + ridge·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: Vec<f64>,
    cov: SymMatrix,
    chol: CholeskyFactor,
    n: usize,
    ridge: f64,
}

impl GaussianModel {
    /// Assembles a model from stored statistics, factorising `cov + ridge·I`.
    pub fn from_parts(mean: Vec<f64>, cov: SymMatrix, n: usize, ridge: f64) -> Result<Self> {
        if mean.len() != cov.order() {
            return Err(Error::dim(cov.order(), mean.len()));
        }
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidConfig(format!("ridge must be nonnegative, got {ridge}")));
        }
        let mut regularised = cov.clone();
        regularised.add_diagonal(ridge);
        let chol = cholesky(&regularised)?;
        Ok(GaussianModel {
            mean,
            cov,
            chol,
            n,
            ridge,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample covariance (without the ridge).
    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::dim(self.dim(), len));
        }
        Ok(())
    }

    /// Solves `(cov + ridge·I) w = v`.
    pub fn spd_solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        Ok(self.chol.solve(v))
    }

    /// `vᵀ (cov + ridge·I)⁻¹ v`.
    pub fn inverse_quad_form(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(self.chol.inverse_quad_form(v))
    }

    /// Statistics of the original points plus `x`, via rank-1 updates of the
    /// mean and covariance. The factor is recomputed since the ridge term
    /// breaks the rank-1 structure of `cov + ridge·I`.
    pub fn append_point(&self, x: &[f64]) -> Result<GaussianModel> {
        self.check_dim(x.len())?;
        let n = self.n as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mean = self
            .mean
            .iter()
            .zip(&delta)
            .map(|(m, d)| m + d / (n + 1.0))
            .collect();
        // (n) S' = (n - 1) S + n/(n + 1) δδᵀ
        let shrink = (n - 1.0) / n;
        let outer = 1.0 / (n + 1.0);
        let d = self.dim();
        let mut cov = SymMatrix::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let idx = packed_index(i, j);
                cov.lower[idx] = shrink * self.cov.lower[idx] + outer * delta[i] * delta[j];
            }
        }
        GaussianModel::from_parts(mean, cov, self.n + 1, self.ridge)
    }
}

/// Mean and unbiased (n − 1) covariance of `points`, with the factor of
/// `cov + ridge·I` cached.
pub fn fit_gaussian<V: AsRef<[f64]>>(points: &[V], ridge: f64) -> Result<GaussianModel> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let d = points[0].as_ref().len();
    if d == 0 {
        return Err(Error::dim(1, 0));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::dim(d, p.len()));
        }
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = SymMatrix::zeros(d);
    let mut centred = vec![0.0; d];
    for p in points {
        for ((c, v), m) in centred.iter_mut().zip(p.as_ref()).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centred[i];
            let row = &mut cov.lower[packed_index(i, 0)..=packed_index(i, i)];
            for (slot, cj) in row.iter_mut().zip(&centred[..=i]) {
                *slot += ci * cj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for v in &mut cov.lower {
        *v /= denom;
    }
    GaussianModel::from_parts(mean, cov, n, ridge)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in nonincreasing order with matching unit
/// eigenvectors; each vector's largest-magnitude entry is positive.
pub fn symmetric_eigen(m: &SymMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.order();
    let mut a = m.to_dense();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut vec: Vec<f64> = v.iter().map(|row| row[col]).collect();
            let pivot = vec
                .iter()
                .copied()
                .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
            vec
        })
        .collect();
    (values, vectors)
}

/// Ring buffer of recent target-class vectors whose statistics are refreshed
/// by full recomputation every `update_frequency` pushed vectors.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    update_frequency: usize,
    dim: usize,
    ridge: f64,
    buffer: VecDeque<Vec<f64>>,
    pending: usize,
    model: Option<GaussianModel>,
}

impl SlidingWindow {
    pub fn new(dim: usize, capacity: usize, update_frequency: usize, ridge: f64) -> Result<Self> {
        if dim == 0 || capacity < 2 || update_frequency == 0 {
            return Err(Error::InvalidConfig(format!(
                "sliding window needs dim >= 1, capacity >= 2 and update frequency >= 1 \
                 (got {dim}, {capacity}, {update_frequency})"
            )));
        }
        Ok(SlidingWindow {
            capacity,
            update_frequency,
            dim,
            ridge,
            buffer: VecDeque::with_capacity(capacity),
            pending: 0,
            model: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn buffer(&self) -> impl Iterator<Item = &[f64]> {
        self.buffer.iter().map(Vec::as_slice)
    }

    /// Statistics as of the last refresh.
    pub fn model(&self) -> Option<&GaussianModel> {
        self.model.as_ref()
    }

    /// Appends a batch, evicting the oldest vectors beyond capacity, and
    /// refreshes the statistics once enough vectors have arrived.
    pub fn push<V: AsRef<[f64]>>(&mut self, batch: &[V]) -> Result<()> {
        if let Some(bad) = batch.iter().find(|v| v.as_ref().len() != self.dim) {
            return Err(Error::dim(self.dim, bad.as_ref().len()));
        }
        if batch.is_empty() {
            return Ok(());
        }
        for v in batch {
            if self.buffer.len() == self.capacity {
                self.buffer.pop_front();
            }
            self.buffer.push_back(v.as_ref().to_vec());
        }
        self.pending += batch.len();
        if self.pending >= self.update_frequency {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the statistics from the buffer now.
    pub fn refresh(&mut self) -> Result<()> {
        if self.buffer.len() >= 2 {
            let points: Vec<&[f64]> = self.buffer().collect();
            self.model = Some(fit_gaussian(&points, self.ridge)?);
            self.pending = 0;
        }
        Ok(())
    }
}
