//! Triangle codebook activation: `a_k = max(0, mu - z_k)` where `z_k` is
//! the distance to centroid k and `mu` their mean.

use crate::num::Real;

/// Triangle activation over precomputed centroid distances.
pub fn triangle_activation<T: Real>(distances: &[T]) -> Vec<T> {
    let n = T::from_usize_lossy(distances.len());
    let mu: T = distances.iter().copied().sum::<T>() / n;
    distances
        .iter()
        .map(|&z| (mu - z).max(T::zero()))
        .collect()
}
