//! Gaussian-visible RBM layers trained with CD-1, stacked greedily into a
//! deep belief net that seeds the MLP weights.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::sigmoid;

/// Hidden unit family of one RBM layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HiddenUnit {
    /// Bounded noisy rectifier `min(alpha, max(0, x + psi))` with
    /// `psi ~ N(0, sigmoid(x))`.
    NoisyRelu { alpha: f64 },
    /// Bernoulli unit with mean `sigmoid(x)`.
    Bernoulli,
}

/// Bounded noisy rectifier; in stochastic mode Gaussian noise with standard
/// deviation `sigmoid(x)` is added before clamping.
pub fn noisy_relu_bounded(x: f64, alpha: f64, stochastic: bool, rng: &mut impl Rng) -> f64 {
    let noise = if stochastic {
        let z: f64 = StandardNormal.sample(rng);
        sigmoid(x) * z
    } else {
        0.0
    };
    (x + noise).max(0.0).min(alpha)
}

#[derive(Debug, Clone)]
pub struct RbmConfig {
    pub visible: usize,
    pub hidden: usize,
    pub unit: HiddenUnit,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_std: f64,
}

impl RbmConfig {
    pub fn new(visible: usize, hidden: usize, unit: HiddenUnit) -> Self {
        Self {
            visible,
            hidden,
            unit,
            learning_rate: 0.0005,
            l2: 2e-4,
            epochs: 15,
            batch_size: 32,
            init_std: 0.01,
        }
    }
}

/// One RBM layer with Gaussian (unit variance) visible units; data is
/// assumed centered.
#[derive(Debug, Clone)]
pub struct RbmLayer {
    /// visible x hidden.
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub unit: HiddenUnit,
    pub learning_rate: f64,
    pub l2: f64,
}

impl RbmLayer {
    pub fn init(cfg: &RbmConfig, rng: &mut impl Rng) -> Self {
        let weights = Array2::from_shape_fn((cfg.visible, cfg.hidden), |_| {
            let z: f64 = StandardNormal.sample(rng);
            z * cfg.init_std
        });
        Self {
            weights,
            visible_bias: Array1::zeros(cfg.visible),
            hidden_bias: Array1::zeros(cfg.hidden),
            unit: cfg.unit,
            learning_rate: cfg.learning_rate,
            l2: cfg.l2,
        }
    }

    fn hidden_pre(&self, v: &Array2<f64>) -> Array2<f64> {
        v.dot(&self.weights) + &self.hidden_bias
    }

    /// Deterministic hidden activations (noise-free means).
    pub fn hidden_mean(&self, v: &Array2<f64>) -> Array2<f64> {
        let mut x = self.hidden_pre(v);
        match self.unit {
            HiddenUnit::NoisyRelu { alpha } => x.mapv_inplace(|p| p.max(0.0).min(alpha)),
            HiddenUnit::Bernoulli => x.mapv_inplace(sigmoid),
        }
        x
    }

    fn hidden_sample(&self, v: &Array2<f64>, rng: &mut impl Rng) -> Array2<f64> {
        let mut x = self.hidden_pre(v);
        match self.unit {
            HiddenUnit::NoisyRelu { alpha } => {
                x.mapv_inplace(|p| noisy_relu_bounded(p, alpha, true, rng));
            }
            HiddenUnit::Bernoulli => {
                x.mapv_inplace(|p| {
                    let u: f64 = rng.random();
                    if u < sigmoid(p) {
                        1.0
                    } else {
                        0.0
                    }
                });
            }
        }
        x
    }

    /// Mean-field visible reconstruction (Gaussian means).
    pub fn visible_mean(&self, h: &Array2<f64>) -> Array2<f64> {
        h.dot(&self.weights.t()) + &self.visible_bias
    }

    /// Mean squared reconstruction error per sample, via deterministic
    /// activations.
    pub fn reconstruction_error(&self, data: &Array2<f64>) -> f64 {
        let h = self.hidden_mean(data);
        let v1 = self.visible_mean(&h);
        let diff = data - &v1;
        diff.iter().map(|d| d * d).sum::<f64>() / data.nrows() as f64
    }
}

/// One contrastive-divergence step: positive phase on the batch, one Gibbs
/// reconstruction, gradient ascent with L2 decay. `data_scale` weights the
/// data term (1 for normal training; 0 isolates the decay).
pub fn cd1_update_scaled(
    layer: &mut RbmLayer,
    batch: &Array2<f64>,
    data_scale: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    if batch.ncols() != layer.weights.nrows() {
        return Err(Error::DimensionMismatch {
            expected: layer.weights.nrows(),
            got: batch.ncols(),
        });
    }
    let b = batch.nrows() as f64;
    let h0_mean = layer.hidden_mean(batch);
    let h0_sample = layer.hidden_sample(batch, rng);
    let v1 = layer.visible_mean(&h0_sample);
    let h1_mean = layer.hidden_mean(&v1);

    let pos = batch.t().dot(&h0_mean) / b;
    let neg = v1.t().dot(&h1_mean) / b;
    let lr = layer.learning_rate;
    let grad_w = (&pos - &neg) * data_scale - &(&layer.weights * layer.l2);
    layer.weights += &(&grad_w * lr);

    let dv = (batch.sum_axis(Axis(0)) - v1.sum_axis(Axis(0))) / b * data_scale;
    layer.visible_bias += &(&dv * lr);
    let dh = (h0_mean.sum_axis(Axis(0)) - h1_mean.sum_axis(Axis(0))) / b * data_scale;
    layer.hidden_bias += &(&dh * lr);
    Ok(())
}

/// Standard CD-1 update (data term fully weighted).
pub fn cd1_update(layer: &mut RbmLayer, batch: &Array2<f64>, rng: &mut impl Rng) -> Result<()> {
    cd1_update_scaled(layer, batch, 1.0, rng)
}

/// Trains one layer for its configured number of epochs over shuffled
/// minibatches, returning per-epoch reconstruction errors (entry 0 is the
/// error before any update).
pub fn train_rbm(
    cfg: &RbmConfig,
    data: &Array2<f64>,
    rng: &mut impl Rng,
) -> Result<(RbmLayer, Vec<f64>)> {
    if data.ncols() != cfg.visible {
        return Err(Error::DimensionMismatch {
            expected: cfg.visible,
            got: data.ncols(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("RBM training set is empty".into()));
    }
    let mut layer = RbmLayer::init(cfg, rng);
    let mut errors = vec![layer.reconstruction_error(data)];
    let n = data.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        // Fisher-Yates with the caller's rng keeps runs reproducible.
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut batch = Array2::zeros((chunk.len(), cfg.visible));
            for (r, &src) in chunk.iter().enumerate() {
                batch.row_mut(r).assign(&data.row(src));
            }
            cd1_update(&mut layer, &batch, rng)?;
        }
        errors.push(layer.reconstruction_error(data));
    }
    Ok((layer, errors))
}

/// Greedy layerwise pretraining: layer k trains on the deterministic
/// activations of layers `< k`.
pub fn pretrain_dbn(
    configs: &[RbmConfig],
    data: &Array2<f64>,
    rng: &mut impl Rng,
) -> Result<Vec<RbmLayer>> {
    if configs.is_empty() {
        return Err(Error::Config("DBN needs at least one layer".into()));
    }
    let mut layers = Vec::with_capacity(configs.len());
    let mut input = data.clone();
    for cfg in configs {
        let (layer, _) = train_rbm(cfg, &input, rng)?;
        input = layer.hidden_mean(&input);
        layers.push(layer);
    }
    Ok(layers)
}
