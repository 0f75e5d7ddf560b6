//! Kernel functions for the SVM classifiers, generic over the scalar type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Guard added to chi-square denominators.
pub const CHI2_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Chi2,
}

/// Kernel family plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
    /// Soft-margin cost of the C-SVM trained with this kernel.
    pub c: f64,
}

impl KernelConfig {
    pub fn new(kind: KernelKind, gamma: f64, c: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("C must be positive, got {c}")));
        }
        Ok(Self { kind, gamma, c })
    }
}

/// `exp(-gamma * ||x - y||^2)`.
pub fn rbf_kernel<T: Real>(gamma: T, x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let sq: T = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d
        })
        .sum();
    (-gamma * sq).exp()
}

/// `exp(-gamma * sum_i (x_i - y_i)^2 / (x_i + y_i + eps))` for non-negative
/// inputs.
pub fn chi2_kernel<T: Real>(gamma: T, x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let eps = T::from_f64_lossy(CHI2_EPS);
    let dist: T = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d / (a + b + eps)
        })
        .sum();
    (-gamma * dist).exp()
}

/// Evaluates the configured kernel, checking dimension and domain
/// preconditions.
pub fn kernel_eval(cfg: &KernelConfig, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    match cfg.kind {
        KernelKind::Rbf => Ok(rbf_kernel(cfg.gamma, x, y)),
        KernelKind::Chi2 => {
            if x.iter().chain(y).any(|&v| v < 0.0) {
                return Err(Error::Domain(
                    "chi-square kernel requires non-negative entries".into(),
                ));
            }
            Ok(chi2_kernel(cfg.gamma, x, y))
        }
    }
}
