//! Top-N temporal pooling: each feature column of a timestep-by-feature
//! activation matrix is summarized by a weighted average of its N largest
//! values.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::num::Real;

/// Pooling depth and the fixed (not learned) weights used at train and test
/// time. Weights must sum to N.
#[derive(Debug, Clone)]
pub struct PoolingConfig {
    pub n: usize,
    pub train_weights: Vec<f64>,
    pub test_weights: Vec<f64>,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            n: 2,
            train_weights: vec![1.4, 0.6],
            test_weights: vec![1.3, 0.7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Train,
    Test,
}

impl PoolingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("pooling N must be >= 1".into()));
        }
        for (name, w) in [("train", &self.train_weights), ("test", &self.test_weights)] {
            if w.len() != self.n {
                return Err(Error::Config(format!(
                    "{name} weights must have N = {} entries",
                    self.n
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - self.n as f64).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "{name} weights sum to {sum}, expected {}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn weights(&self, mode: PoolMode) -> &[f64] {
        match mode {
            PoolMode::Train => &self.train_weights,
            PoolMode::Test => &self.test_weights,
        }
    }
}

/// Indices of the top `n` entries of a column, ties broken by earliest
/// timestep.
fn top_indices<T: Real>(col: &[T], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..col.len()).collect();
    order.sort_by(|&a, &b| {
        col[b]
            .partial_cmp(&col[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order
}

/// Effective weights when fewer than N timesteps exist: the first `n_eff`
/// weights rescaled to sum to `n_eff`.
fn effective_weights<T: Real>(weights: &[T], n_eff: usize) -> Vec<T> {
    if n_eff >= weights.len() {
        return weights.to_vec();
    }
    let partial: T = weights[..n_eff].iter().copied().sum();
    let target = T::from_usize_lossy(n_eff);
    weights[..n_eff].iter().map(|&w| w * target / partial).collect()
}

/// Pools `a` (timesteps x features) column-wise:
/// `F_j = (1/N') * sum_i w_i * (i-th largest of column j)` with
/// `N' = min(N, timesteps)`.
pub fn topn_pool<T: Real>(a: &Array2<T>, weights: &[T]) -> Array1<T> {
    let d_t = a.nrows();
    let d_f = a.ncols();
    let n_eff = weights.len().min(d_t);
    let w = effective_weights(weights, n_eff);
    let scale = T::one() / T::from_usize_lossy(n_eff);
    let mut out = Array1::zeros(d_f);
    for j in 0..d_f {
        let col: Vec<T> = a.column(j).to_vec();
        let idx = top_indices(&col, n_eff);
        let mut acc = T::zero();
        for (i, &r) in idx.iter().enumerate() {
            acc += w[i] * col[r];
        }
        out[j] = acc * scale;
    }
    out
}

/// Routes the upstream gradient back through the pooling: position holding
/// the i-th largest value of column j receives `w_i / N' * upstream_j`.
pub fn topn_pool_backward<T: Real>(
    a: &Array2<T>,
    weights: &[T],
    upstream: &Array1<T>,
) -> Array2<T> {
    let d_t = a.nrows();
    let d_f = a.ncols();
    debug_assert_eq!(upstream.len(), d_f);
    let n_eff = weights.len().min(d_t);
    let w = effective_weights(weights, n_eff);
    let scale = T::one() / T::from_usize_lossy(n_eff);
    let mut grad = Array2::zeros((d_t, d_f));
    for j in 0..d_f {
        let col: Vec<T> = a.column(j).to_vec();
        let idx = top_indices(&col, n_eff);
        for (i, &r) in idx.iter().enumerate() {
            grad[(r, j)] = w[i] * scale * upstream[j];
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> PoolingConfig {
        PoolingConfig::default()
    }

    #[test]
    fn constant_rows_pool_to_the_row() {
        let a = array![[0.3, 0.8, 0.1], [0.3, 0.8, 0.1], [0.3, 0.8, 0.1]];
        let pooled = topn_pool(&a, &cfg().train_weights);
        for (p, e) in pooled.iter().zip([0.3, 0.8, 0.1]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn worked_two_column_example() {
        // Columns (0.9, 0.5, 0.3) and (0.1, 0.7, 0.2), N = 2, test weights.
        let a = array![[0.9, 0.1], [0.5, 0.7], [0.3, 0.2]];
        let pooled = topn_pool(&a, &cfg().test_weights);
        // Independent sort-and-dot evaluation.
        let oracle = |mut col: Vec<f64>, w: &[f64]| -> f64 {
            col.sort_by(|a, b| b.partial_cmp(a).unwrap());
            (w[0] * col[0] + w[1] * col[1]) / 2.0
        };
        let e0 = oracle(vec![0.9, 0.5, 0.3], &cfg().test_weights);
        let e1 = oracle(vec![0.1, 0.7, 0.2], &cfg().test_weights);
        assert!((e0 - 0.76).abs() < 1e-12);
        assert!((e1 - 0.525).abs() < 1e-12);
        assert!((pooled[0] - 0.76).abs() < 1e-12);
        assert!((pooled[1] - 0.525).abs() < 1e-12);
    }

    #[test]
    fn single_timestep_pools_to_that_row() {
        let a = array![[0.4, -0.2, 1.7]];
        let pooled = topn_pool(&a, &cfg().train_weights);
        for (p, e) in pooled.iter().zip([0.4, -0.2, 1.7]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariance_over_timesteps() {
        let a = array![[0.9, 0.1], [0.5, 0.7], [0.3, 0.2], [0.8, 0.4]];
        let p = array![[0.3, 0.2], [0.9, 0.1], [0.8, 0.4], [0.5, 0.7]];
        let w = &cfg().test_weights;
        assert_eq!(topn_pool(&a, w), topn_pool(&p, w));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = cfg().train_weights;
        for _ in 0..20 {
            let a = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0f64));
            let upstream = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0f64));
            let grad = topn_pool_backward(&a, &w, &upstream);
            let eps = 1e-6;
            let objective = |m: &Array2<f64>| -> f64 {
                topn_pool(m, &w)
                    .iter()
                    .zip(upstream.iter())
                    .map(|(f, u)| f * u)
                    .sum()
            };
            for r in 0..6 {
                for c in 0..4 {
                    let mut ap = a.clone();
                    ap[(r, c)] += eps;
                    let mut am = a.clone();
                    am[(r, c)] -= eps;
                    let fd = (objective(&ap) - objective(&am)) / (2.0 * eps);
                    let g = grad[(r, c)];
                    let rel = (g - fd).abs() / fd.abs().max(1e-8);
                    assert!(rel < 1e-5, "({r},{c}): analytic {g} fd {fd}");
                }
            }
        }
    }

    #[test]
    fn backward_zero_upstream_and_sparsity() {
        let a = array![[0.9, 0.1], [0.5, 0.7], [0.3, 0.2]];
        let w = cfg().train_weights;
        let zero = topn_pool_backward(&a, &w, &Array1::zeros(2));
        assert!(zero.iter().all(|&g| g == 0.0));

        let g = topn_pool_backward(&a, &w, &array![1.0, 1.0]);
        for j in 0..2 {
            let nonzero = g.column(j).iter().filter(|&&v| v != 0.0).count();
            assert!(nonzero <= 2);
        }
    }

    #[test]
    fn duplicated_timesteps_leave_pooling_unchanged_for_n2() {
        let a = array![[0.9, 0.1], [0.5, 0.7], [0.3, 0.2]];
        let mut doubled = Vec::new();
        for r in a.rows() {
            doubled.extend(r.iter().copied());
            doubled.extend(r.iter().copied());
        }
        let d = Array2::from_shape_vec((6, 2), doubled).unwrap();
        // Direct evaluation of the duplicated multiset: top-2 of each
        // column is the max twice.
        let w = &cfg().test_weights;
        let pooled = topn_pool(&d, w);
        for j in 0..2 {
            let max = a.column(j).iter().copied().fold(f64::MIN, f64::max);
            let expect = (w[0] * max + w[1] * max) / 2.0;
            assert!((pooled[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn pooled_value_never_exceeds_column_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let a = Array2::from_shape_fn((7, 3), |_| rng.random_range(-2.0..2.0f64));
            for w in [&cfg().train_weights, &cfg().test_weights] {
                let pooled = topn_pool(&a, w);
                for j in 0..3 {
                    let max = a.column(j).iter().copied().fold(f64::MIN, f64::max);
                    assert!(pooled[j] <= max + 1e-12, "column {j}");
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = PoolingConfig {
            n: 2,
            train_weights: vec![1.0, 0.5],
            test_weights: vec![1.3, 0.7],
        };
        assert!(bad.validate().is_err());
    }
}
