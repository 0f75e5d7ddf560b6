//! Lloyd's k-means with k-means++ seeding and farthest-point reseeding of
//! empty clusters.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::squared_distance;

/// K centroids in the (whitened) feature space.
#[derive(Debug, Clone)]
pub struct Codebook {
    /// K x d.
    pub centroids: Array2<f64>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.rows().into_iter().enumerate() {
            let d = squared_distance(c.as_slice().expect("row contiguous"), x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Euclidean distances to every centroid.
    pub fn distances(&self, x: &[f64]) -> Vec<f64> {
        self.centroids
            .rows()
            .into_iter()
            .map(|c| squared_distance(c.as_slice().expect("row contiguous"), x).sqrt())
            .collect()
    }
}

fn assignments(points: &Array2<f64>, codebook: &Codebook) -> Vec<usize> {
    // Parallel over points; collect preserves index order, so results are
    // identical to the serial pass.
    (0..points.nrows())
        .into_par_iter()
        .map(|i| codebook.assign(points.row(i).as_slice().expect("row contiguous")))
        .collect()
}

fn objective(points: &Array2<f64>, codebook: &Codebook, assign: &[usize]) -> f64 {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            squared_distance(
                points.row(i).as_slice().expect("row contiguous"),
                codebook.centroids.row(assign[i]).as_slice().expect("row contiguous"),
            )
        })
        .sum()
}

fn kmeans_pp_seed(points: &Array2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let d = points.ncols();
    let mut centroids = Array2::zeros((k, d));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| {
            squared_distance(
                points.row(i).as_slice().expect("row contiguous"),
                points.row(first).as_slice().expect("row contiguous"),
            )
        })
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target: f64 = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        centroids.row_mut(c).assign(&points.row(chosen));
        for i in 0..n {
            let d2 = squared_distance(
                points.row(i).as_slice().expect("row contiguous"),
                points.row(chosen).as_slice().expect("row contiguous"),
            );
            if d2 < dist2[i] {
                dist2[i] = d2;
            }
        }
    }
    centroids
}

/// Fits K centroids; returns the codebook and the per-iteration objective
/// (sum of squared distances), which is non-increasing.
pub fn kmeans_fit(
    points: &Array2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<(Codebook, Vec<f64>)> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::EmptyInput(format!("{n} points for {k} clusters")));
    }
    {
        let mut distinct = std::collections::HashSet::new();
        for row in points.rows() {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            distinct.insert(key);
            if distinct.len() >= k {
                break;
            }
        }
        if distinct.len() < k {
            return Err(Error::EmptyInput(format!(
                "only {} distinct points for {k} clusters",
                distinct.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codebook = Codebook {
        centroids: kmeans_pp_seed(points, k, &mut rng),
    };
    let mut prev_assign: Option<Vec<usize>> = None;
    let mut objectives = Vec::new();
    let d = points.ncols();
    for _ in 0..max_iters {
        let assign = assignments(points, &codebook);
        objectives.push(objective(points, &codebook, &assign));
        if prev_assign.as_ref() == Some(&assign) {
            break;
        }
        // Mean update.
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            let mut row = sums.row_mut(a);
            row += &points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = codebook.centroids.row_mut(c);
                row.assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        // Reseed empty clusters to the farthest point from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = 0usize;
                let mut far_d = -1.0;
                for i in 0..points.nrows() {
                    let dd = squared_distance(
                        points.row(i).as_slice().expect("row contiguous"),
                        codebook
                            .centroids
                            .row(assign[i])
                            .as_slice()
                            .expect("row contiguous"),
                    );
                    if dd > far_d {
                        far_d = dd;
                        far = i;
                    }
                }
                codebook.centroids.row_mut(c).assign(&points.row(far));
            }
        }
        prev_assign = Some(assign);
    }
    Ok((codebook, objectives))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn clustered_points(seed: u64, per_cluster: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0, 0.0], [5.0, 5.0], [0.0, 6.0]];
        let n = per_cluster * centers.len();
        let mut m = Array2::zeros((n, 2));
        for i in 0..n {
            let c = centers[i / per_cluster];
            m[(i, 0)] = c[0] + rng.random_range(-0.5..0.5);
            m[(i, 1)] = c[1] + rng.random_range(-0.5..0.5);
        }
        m
    }

    #[test]
    fn k1_gives_the_mean() {
        let points = clustered_points(1, 10);
        let (cb, _) = kmeans_fit(&points, 1, 0, 300).unwrap();
        let mean = points.mean_axis(ndarray::Axis(0)).unwrap();
        for j in 0..2 {
            assert!((cb.centroids[(0, j)] - mean[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_reproduces_points() {
        let points = clustered_points(2, 2);
        let n = points.nrows();
        let (cb, objectives) = kmeans_fit(&points, n, 7, 300).unwrap();
        assert!(objectives.last().unwrap() < &1e-18);
        // Every point is some centroid.
        for row in points.rows() {
            let a = cb.assign(row.as_slice().unwrap());
            let d = squared_distance(
                row.as_slice().unwrap(),
                cb.centroids.row(a).as_slice().unwrap(),
            );
            assert!(d < 1e-18);
        }
    }

    #[test]
    fn objective_is_monotone_non_increasing() {
        for seed in 0..10u64 {
            let points = clustered_points(seed + 100, 30);
            let (_, objectives) = kmeans_fit(&points, 3, seed, 300).unwrap();
            for w in objectives.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9,
                    "objective rose from {} to {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let points = clustered_points(3, 20);
        let (a, _) = kmeans_fit(&points, 3, 11, 300).unwrap();
        let (b, _) = kmeans_fit(&points, 3, 11, 300).unwrap();
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn too_few_points_rejected() {
        let points = Array2::zeros((3, 2));
        assert!(kmeans_fit(&points, 4, 0, 10).is_err());
        // 3 identical points cannot seed 2 distinct clusters.
        assert!(kmeans_fit(&points, 2, 0, 10).is_err());
    }
}
