//! PCA whitening with either a retained-variance target or a fixed
//! component count.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

/// Floor applied to eigenvalues before the inverse square root.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WhitenMode {
    /// Smallest k whose cumulative variance reaches the fraction.
    VarianceFraction(f64),
    FixedK(usize),
}

/// Centering mean plus a `k x d` projection whose rows are eigenvectors
/// scaled by inverse square-root eigenvalues (rows are orthogonal).
#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    pub projection: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub mode: WhitenMode,
}

/// Fits PCA whitening on `samples` (n x d). Uses the covariance route when
/// `d <= n` and the Gram (snapshot) route otherwise, which keeps the
/// eigenproblem at `min(n, d)` rows.
pub fn whiten_fit(samples: &Array2<f64>, mode: WhitenMode) -> Result<WhiteningTransform> {
    let n = samples.nrows();
    let d = samples.ncols();
    if n < 2 {
        return Err(Error::EmptyInput("whitening needs at least 2 samples".into()));
    }
    match mode {
        WhitenMode::VarianceFraction(f) => {
            if !(0.0 < f && f <= 1.0) {
                return Err(Error::Config(format!("variance fraction {f} outside (0, 1]")));
            }
        }
        WhitenMode::FixedK(k) => {
            if k == 0 || k > n.min(d) {
                return Err(Error::Config(format!(
                    "fixed k = {k} outside 1..={}",
                    n.min(d)
                )));
            }
        }
    }
    let mean = samples.sum_axis(ndarray::Axis(0)) / n as f64;
    let centered = samples - &mean;

    // (eigenvalue, unit eigenvector in d-space) pairs, descending.
    let (values, vectors) = if d <= n {
        let cov = centered.t().dot(&centered) / n as f64;
        let eig = symmetric_eigen(&cov)?;
        (eig.values.to_vec(), eig.vectors)
    } else {
        let gram = centered.dot(&centered.t()) / n as f64;
        let eig = symmetric_eigen(&gram)?;
        let mut vecs = Array2::zeros((d, n));
        for j in 0..n {
            let lambda = eig.values[j];
            if lambda > EIGENVALUE_FLOOR {
                let u = centered.t().dot(&eig.vectors.column(j)) / (lambda * n as f64).sqrt();
                vecs.column_mut(j).assign(&u);
            }
        }
        (eig.values.to_vec(), vecs)
    };

    let available = values.len();
    let k = match mode {
        WhitenMode::FixedK(k) => k,
        WhitenMode::VarianceFraction(f) => {
            let total: f64 = values.iter().map(|&v| v.max(0.0)).sum();
            if total <= 0.0 {
                return Err(Error::Domain("degenerate covariance: zero variance".into()));
            }
            let mut acc = 0.0;
            let mut k = available;
            for (i, &v) in values.iter().enumerate() {
                acc += v.max(0.0);
                if acc >= f * total - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };

    let mut projection = Array2::zeros((k, d));
    let mut eigenvalues = Vec::with_capacity(k);
    for i in 0..k {
        let lambda = values[i].max(EIGENVALUE_FLOOR);
        eigenvalues.push(values[i]);
        let scale = 1.0 / lambda.sqrt();
        for j in 0..d {
            projection[(i, j)] = vectors[(j, i)] * scale;
        }
    }
    Ok(WhiteningTransform {
        mean,
        projection,
        eigenvalues,
        mode,
    })
}

impl WhiteningTransform {
    pub fn output_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.projection.ncols()
    }

    /// Projects one centered sample.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let v = Array1::from_iter(x.iter().copied()) - &self.mean;
        Ok(self.projection.dot(&v).to_vec())
    }

    /// Projects a batch of rows.
    pub fn apply_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let centered = x - &self.mean;
        Ok(centered.dot(&self.projection.t()))
    }
}
