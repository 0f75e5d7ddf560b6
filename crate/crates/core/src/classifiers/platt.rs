//! Sigmoid calibration of decision values and pairwise coupling of binary
//! probabilities into a multiclass distribution.

use crate::error::{Error, Result};

/// Fits `P(y = +1 | f) = 1 / (1 + exp(A f + B))` to decision values by
/// regularized maximum likelihood (Newton iterations with backtracking).
pub fn sigmoid_fit(decisions: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    let n = decisions.len();
    if n == 0 || n != labels.len() {
        return Err(Error::EmptyInput("sigmoid fit without data".into()));
    }
    let prior1 = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    let prior0 = n as f64 - prior1;

    let hi_target = (prior1 + 1.0) / (prior1 + 2.0);
    let lo_target = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0.0 { hi_target } else { lo_target })
        .collect();

    let min_step = 1e-10;
    let sigma = 1e-12;
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();

    let fval = |a: f64, b: f64| -> f64 {
        let mut v = 0.0;
        for (&f, &t) in decisions.iter().zip(&targets) {
            let fapb = f * a + b;
            if fapb >= 0.0 {
                v += t * fapb + (1.0 + (-fapb).exp()).ln();
            } else {
                v += (t - 1.0) * fapb + (1.0 + fapb.exp()).ln();
            }
        }
        v
    };
    let mut current = fval(a, b);

    for _ in 0..100 {
        let mut h11 = sigma;
        let mut h22 = sigma;
        let mut h21 = 0.0;
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for (&f, &t) in decisions.iter().zip(&targets) {
            let fapb = f * a + b;
            let (p, q) = if fapb >= 0.0 {
                let e = (-fapb).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = fapb.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut moved = false;
        while step >= min_step {
            let na = a + step * da;
            let nb = b + step * db;
            let nval = fval(na, nb);
            if nval < current + 1e-4 * step * gd {
                a = na;
                b = nb;
                current = nval;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok((a, b))
}

/// Probability of the positive class under a fitted sigmoid.
pub fn sigmoid_predict(f: f64, a: f64, b: f64) -> f64 {
    let fapb = f * a + b;
    if fapb >= 0.0 {
        let e = (-fapb).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + fapb.exp())
    }
}

/// Couples pairwise probabilities `r[i][j] = P(i | i or j)` into a single
/// distribution over `k` classes (second method of Wu, Lin & Weng).
pub fn pairwise_coupling(r: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = r.len();
    if k == 0 {
        return Err(Error::EmptyInput("pairwise coupling of zero classes".into()));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let mut q = vec![vec![0.0f64; k]; k];
    for t in 0..k {
        for j in 0..k {
            if j == t {
                q[t][t] = (0..k).filter(|&m| m != t).map(|m| r[m][t] * r[m][t]).sum();
            } else {
                q[t][j] = -r[j][t] * r[t][j];
            }
        }
    }
    let mut p = vec![1.0 / k as f64; k];
    let eps = 0.005 / k as f64;
    let max_iter = 100.max(k);
    for _ in 0..max_iter {
        let mut qp = vec![0.0f64; k];
        let mut pqp = 0.0;
        for t in 0..k {
            for j in 0..k {
                qp[t] += q[t][j] * p[j];
            }
            pqp += p[t] * qp[t];
        }
        let max_err = qp
            .iter()
            .map(|&v| (v - pqp).abs())
            .fold(0.0f64, f64::max);
        if max_err < eps {
            break;
        }
        for t in 0..k {
            let diff = (-qp[t] + pqp) / q[t][t];
            p[t] += diff;
            pqp = (pqp + diff * (diff * q[t][t] + 2.0 * qp[t])) / ((1.0 + diff) * (1.0 + diff));
            for j in 0..k {
                qp[j] = (qp[j] + diff * q[t][j]) / (1.0 + diff);
                p[j] /= 1.0 + diff;
            }
        }
    }
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_fit_separates_signed_decisions() {
        let decisions: Vec<f64> = (0..40)
            .map(|i| if i < 20 { 1.0 + 0.05 * i as f64 } else { -1.0 - 0.05 * i as f64 })
            .collect();
        let labels: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { -1.0 }).collect();
        let (a, b) = sigmoid_fit(&decisions, &labels).unwrap();
        assert!(sigmoid_predict(2.0, a, b) > 0.8);
        assert!(sigmoid_predict(-2.0, a, b) < 0.2);
        // Monotone decreasing A (positive decisions mean positive class).
        assert!(a < 0.0);
    }

    #[test]
    fn coupling_two_classes_is_direct() {
        let r = vec![vec![0.0, 0.7], vec![0.3, 0.0]];
        let p = pairwise_coupling(&r).unwrap();
        assert!((p[0] - 0.7).abs() < 0.01);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_consistent_matrix_recovers_p() {
        // r built from a known distribution: r_ij = p_i / (p_i + p_j).
        let truth = [0.5, 0.3, 0.2];
        let k = truth.len();
        let mut r = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    r[i][j] = truth[i] / (truth[i] + truth[j]);
                }
            }
        }
        let p = pairwise_coupling(&r).unwrap();
        for i in 0..k {
            assert!((p[i] - truth[i]).abs() < 0.01, "class {i}: {}", p[i]);
        }
    }

    #[test]
    fn coupling_output_is_normalized() {
        let r = vec![
            vec![0.0, 0.9, 0.4],
            vec![0.1, 0.0, 0.8],
            vec![0.6, 0.2, 0.0],
        ];
        let p = pairwise_coupling(&r).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
    }
}
