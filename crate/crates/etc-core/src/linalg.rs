//! Dense vectors and matrices plus the empirical statistics the routing
//! probe is built from: means, population covariances, a ridge-regularized
//! SPD inverse, and squared Mahalanobis distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

/// Default ridge, relative to the mean diagonal magnitude of the matrix
/// being inverted. Critique covariances are frequently singular (critique
/// dimension can exceed the sample count), so the probe always inverts
/// through this regularizer.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::NoSamples);
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }
}

/// Per-domain critique distribution: mean, population covariance, and the
/// cached regularized inverse of the covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub precision: Matrix,
}

impl GaussianStats {
    /// Fits mean and covariance, then caches the ridge-regularized inverse.
    pub fn fit(samples: &[Vec<f64>], ridge: f64) -> Result<Self> {
        let mean = empirical_mean(samples)?;
        let covariance = empirical_covariance(samples, &mean)?;
        let precision = regularized_inverse(&covariance, ridge)?;
        Ok(GaussianStats {
            mean,
            covariance,
            precision,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Mean and population standard deviation of a scalar sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats {
    pub mu: f64,
    pub sigma: f64,
}

fn check_finite(values: &[f64], context: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Element-wise arithmetic mean with 1/N scaling.
pub fn empirical_mean(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = match samples.first() {
        None => return Err(Error::NoSamples),
        Some(s) => s.len(),
    };
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
        check_finite(s, "empirical_mean input")?;
    }
    let sum = exec::chunked_map_reduce(
        samples,
        |chunk| {
            let mut acc = vec![0.0; dim];
            for s in chunk {
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += *v;
                }
            }
            acc
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += *y;
            }
            a
        },
    )
    .expect("non-empty checked above");
    let n = samples.len() as f64;
    Ok(sum.into_iter().map(|v| v / n).collect())
}

/// Population covariance (1/N, not 1/(N-1)) around the supplied mean.
///
/// Only the upper triangle is accumulated and then mirrored; products
/// commute bitwise, so the result is exactly symmetric.
pub fn empirical_covariance(samples: &[Vec<f64>], mean: &[f64]) -> Result<Matrix> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let dim = mean.len();
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
        check_finite(s, "empirical_covariance input")?;
    }
    check_finite(mean, "empirical_covariance mean")?;

    let mut cov = exec::chunked_map_reduce(
        samples,
        |chunk| {
            let mut acc = Matrix::zeros(dim, dim);
            let mut diff = vec![0.0; dim];
            for s in chunk {
                for ((d, v), m) in diff.iter_mut().zip(s).zip(mean) {
                    *d = *v - *m;
                }
                for i in 0..dim {
                    let di = diff[i];
                    for j in i..dim {
                        let v = acc.get(i, j) + di * diff[j];
                        acc.set(i, j, v);
                    }
                }
            }
            acc
        },
        |mut a, b| {
            a.add_assign(&b);
            a
        },
    )
    .expect("non-empty checked above");

    let n = samples.len() as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov.get(i, j) / n;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(cov)
}

/// Lower-triangular Cholesky factor, or `None` if the matrix is not
/// (numerically) positive definite.
fn cholesky(m: &Matrix) -> Option<Matrix> {
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solves L y = b then Lᵀ x = y, giving (L Lᵀ)⁻¹ b.
fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Inverse of `m + ridge·trace(m)/d·I` via Cholesky factorization.
///
/// `m` must be square and symmetric; the result is symmetrized exactly.
pub fn regularized_inverse(m: &Matrix, ridge: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            got: m.cols(),
        });
    }
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::InvalidParameter(format!("ridge {ridge} must be >= 0")));
    }
    let scale = m.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m.max_asymmetry() > 1e-9 * scale.max(1.0) {
        return Err(Error::InvalidParameter(
            "matrix is not symmetric".to_string(),
        ));
    }
    let d = m.rows();
    let mut a = m.clone();
    let bump = ridge * m.trace() / d as f64;
    for i in 0..d {
        let v = a.get(i, i) + bump;
        a.set(i, i, v);
    }
    let l = cholesky(&a).ok_or(Error::NotPositiveDefinite)?;

    // Invert column by column, then enforce exact symmetry.
    let mut inv = Matrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        e[j] = 0.0;
        for i in 0..d {
            inv.set(i, j, col[i]);
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    Ok(inv)
}

/// Squared Mahalanobis distance (x−μ)ᵀ·precision·(x−μ). No square root;
/// thresholds downstream are calibrated on the squared form.
pub fn mahalanobis(x: &[f64], stats: &GaussianStats) -> Result<f64> {
    if x.len() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            got: x.len(),
        });
    }
    let diff: Vec<f64> = x.iter().zip(&stats.mean).map(|(a, b)| a - b).collect();
    let px = stats.precision.matvec(&diff)?;
    let q: f64 = diff.iter().zip(&px).map(|(a, b)| a * b).sum();
    // Tiny negative values are rounding noise from the symmetrized inverse.
    Ok(q.max(0.0))
}

/// Mean and population standard deviation (two-pass).
pub fn scalar_stats(values: &[f64]) -> Result<ScalarStats> {
    if values.is_empty() {
        return Err(Error::NoSamples);
    }
    check_finite(values, "scalar_stats input")?;
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    Ok(ScalarStats {
        mu,
        sigma: var.sqrt(),
    })
}
