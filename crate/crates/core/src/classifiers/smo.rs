//! Sequential minimal optimization for the binary soft-margin SVM dual.

use ndarray::Array2;

use crate::error::{Error, Result};

/// KKT tolerance the solver drives the duality gap below.
pub const KKT_TOL: f64 = 1e-3;

const TAU: f64 = 1e-12;

/// Solution of one binary subproblem.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    /// Dual coefficients, one per training sample, in `[0, C]`.
    pub alpha: Vec<f64>,
    /// Bias such that the decision value is
    /// `sum_k alpha_k y_k K(x_k, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
}

/// Solves `min 1/2 a' Q a - e' a` s.t. `y' a = 0`, `0 <= a <= C` with
/// `Q_ij = y_i y_j K_ij`, by repeatedly optimizing the maximal violating
/// pair.
pub fn solve(gram: &Array2<f64>, labels: &[f64], c: f64, tol: f64) -> Result<BinarySolution> {
    let n = labels.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gram.nrows(),
        });
    }
    debug_assert!(labels.iter().all(|&y| y == 1.0 || y == -1.0));

    let mut alpha = vec![0.0f64; n];
    // grad_k = (Q a)_k - 1
    let mut grad = vec![-1.0f64; n];
    let max_iter = 10_000_000usize.min(200 * n * n + 10_000);

    let mut iterations = 0;
    loop {
        // Maximal violating pair over I_up / I_low.
        let mut i_best: Option<(usize, f64)> = None;
        let mut j_best: Option<(usize, f64)> = None;
        for k in 0..n {
            let v = -labels[k] * grad[k];
            let in_up = (labels[k] > 0.0 && alpha[k] < c) || (labels[k] < 0.0 && alpha[k] > 0.0);
            let in_low = (labels[k] > 0.0 && alpha[k] > 0.0) || (labels[k] < 0.0 && alpha[k] < c);
            if in_up && i_best.map_or(true, |(_, best)| v > best) {
                i_best = Some((k, v));
            }
            if in_low && j_best.map_or(true, |(_, best)| v < best) {
                j_best = Some((k, v));
            }
        }
        let (i, m_up) = i_best.ok_or_else(|| Error::Training("empty working set".into()))?;
        let (j, m_low) = j_best.ok_or_else(|| Error::Training("empty working set".into()))?;
        if m_up - m_low < tol {
            let bias = compute_bias(&alpha, &grad, labels, c, m_up, m_low);
            return Ok(BinarySolution {
                alpha,
                bias,
                iterations,
            });
        }
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Training(format!(
                "SMO did not converge within {max_iter} iterations"
            )));
        }

        // Two-variable update along y_i da_i = -y_j da_j = delta.
        let eta = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(TAU);
        let unconstrained = (m_up - m_low) / eta;
        let room_i = if labels[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if labels[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let delta = unconstrained.min(room_i).min(room_j);

        alpha[i] += labels[i] * delta;
        alpha[j] -= labels[j] * delta;
        // Numerical cleanup at the box boundary.
        alpha[i] = alpha[i].clamp(0.0, c);
        alpha[j] = alpha[j].clamp(0.0, c);

        for k in 0..n {
            grad[k] += labels[k] * delta * (gram[(k, i)] - gram[(k, j)]);
        }
    }
}

fn compute_bias(alpha: &[f64], grad: &[f64], labels: &[f64], c: f64, m_up: f64, m_low: f64) -> f64 {
    // Free support vectors pin the bias exactly; otherwise use the midpoint
    // of the feasible interval.
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..alpha.len() {
        if alpha[k] > 0.0 && alpha[k] < c {
            sum += -labels[k] * grad[k];
            count += 1;
        }
    }
    if count > 0 {
        sum / count as f64
    } else {
        (m_up + m_low) / 2.0
    }
}
