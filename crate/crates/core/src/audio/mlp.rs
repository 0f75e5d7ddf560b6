//! MLP over per-timestep features with top-N temporal pooling before the
//! softmax, plus its fine-tuning loop (dropout, max-norm, RMSProp with
//! Nesterov momentum, early stopping).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::optim::{RmsPropConfig, RmsPropState};
use crate::audio::pooling::{topn_pool, topn_pool_backward, PoolMode, PoolingConfig};
use crate::audio::rbm::RbmLayer;
use crate::audio::{AudioClip, FeatureSequence};
use crate::emotions::{ClassDistribution, EmotionLabel};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// in x out.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.dot(&self.weights) + &self.bias;
        match self.activation {
            Activation::Relu => h.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => h.mapv_inplace(sigmoid),
        }
        h
    }

    /// Derivative of the activation expressed through its output value.
    fn act_prime_from_output(&self, h: f64) -> f64 {
        match self.activation {
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
        }
    }
}

/// MLP whose last hidden layer is pooled over time before a 7-way softmax.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    /// d_hidden x 7.
    pub softmax_weights: Array2<f64>,
    pub softmax_bias: Array1<f64>,
    pub pooling: PoolingConfig,
}

/// Gradients matching [`Mlp`]'s tensors.
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub softmax_weights: Array2<f64>,
    pub softmax_bias: Array1<f64>,
}

impl Mlp {
    /// Random initialization (for baselines and tests).
    pub fn random(
        input_dim: usize,
        hidden: &[usize],
        pooling: PoolingConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        pooling.validate()?;
        if hidden.is_empty() {
            return Err(Error::Config("MLP needs at least one hidden layer".into()));
        }
        let mut layers = Vec::new();
        let mut prev = input_dim;
        for (k, &size) in hidden.iter().enumerate() {
            let std = (1.0 / prev as f64).sqrt() * 0.5;
            layers.push(Layer {
                weights: Array2::from_shape_fn((prev, size), |_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                }),
                bias: Array1::zeros(size),
                activation: if k == 0 {
                    Activation::Relu
                } else {
                    Activation::Sigmoid
                },
            });
            prev = size;
        }
        Ok(Self {
            layers,
            softmax_weights: Array2::from_shape_fn((prev, NUM_CLASSES), |_| {
                let z: f64 = StandardNormal.sample(rng);
                z * 0.01
            }),
            softmax_bias: Array1::zeros(NUM_CLASSES),
            pooling,
        })
    }

    /// Builds the MLP from greedily pretrained RBM layers: the first layer
    /// keeps the ReLU family of its noisy-rectifier RBM, deeper layers are
    /// sigmoid.
    pub fn from_dbn(dbn: &[RbmLayer], pooling: PoolingConfig, rng: &mut impl Rng) -> Result<Self> {
        pooling.validate()?;
        if dbn.is_empty() {
            return Err(Error::Config("DBN has no layers".into()));
        }
        let layers: Vec<Layer> = dbn
            .iter()
            .enumerate()
            .map(|(k, rbm)| Layer {
                weights: rbm.weights.clone(),
                bias: rbm.hidden_bias.clone(),
                activation: if k == 0 {
                    Activation::Relu
                } else {
                    Activation::Sigmoid
                },
            })
            .collect();
        let prev = layers.last().expect("non-empty").weights.ncols();
        Ok(Self {
            layers,
            softmax_weights: Array2::from_shape_fn((prev, NUM_CLASSES), |_| {
                let z: f64 = StandardNormal.sample(rng);
                z * 0.01
            }),
            softmax_bias: Array1::zeros(NUM_CLASSES),
            pooling,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    /// Forward pass to class probabilities; `masks` optionally applies
    /// inverted-dropout scaling per hidden layer.
    fn forward_probs(
        &self,
        a: &Array2<f64>,
        mode: PoolMode,
        masks: Option<&[Array1<f64>]>,
    ) -> (Vec<Array2<f64>>, Array1<f64>, [f64; NUM_CLASSES]) {
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut x = a.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut h = layer.forward(&x);
            if let Some(masks) = masks {
                h *= &masks[k];
            }
            outputs.push(h.clone());
            x = h;
        }
        let weights: Vec<f64> = self.pooling.weights(mode).to_vec();
        let pooled = topn_pool(outputs.last().expect("layers non-empty"), &weights);
        let logits = pooled.dot(&self.softmax_weights) + &self.softmax_bias;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = [0.0; NUM_CLASSES];
        let mut sum = 0.0;
        for c in 0..NUM_CLASSES {
            probs[c] = (logits[c] - max).exp();
            sum += probs[c];
        }
        for p in &mut probs {
            *p /= sum;
        }
        (outputs, pooled, probs)
    }

    /// Cross-entropy loss (plus L2 on all weight matrices).
    pub fn loss(
        &self,
        a: &Array2<f64>,
        label: EmotionLabel,
        mode: PoolMode,
        l2: f64,
    ) -> f64 {
        let (_, _, probs) = self.forward_probs(a, mode, None);
        let mut loss = -(probs[label.index()].max(1e-300)).ln();
        loss += 0.5 * l2 * self.weight_squared_norm();
        loss
    }

    fn weight_squared_norm(&self) -> f64 {
        let mut s: f64 = self
            .layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum();
        s += self.softmax_weights.iter().map(|w| w * w).sum::<f64>();
        s
    }

    /// Loss and gradients for one clip.
    pub fn loss_and_grads(
        &self,
        a: &Array2<f64>,
        label: EmotionLabel,
        mode: PoolMode,
        l2: f64,
        masks: Option<&[Array1<f64>]>,
    ) -> (f64, MlpGrads) {
        let (outputs, pooled, probs) = self.forward_probs(a, mode, masks);
        let mut loss = -(probs[label.index()].max(1e-300)).ln();
        loss += 0.5 * l2 * self.weight_squared_norm();

        let mut dlogits = Array1::from_iter(probs.iter().copied());
        dlogits[label.index()] -= 1.0;

        let mut grad_sw = &self.softmax_weights * l2;
        for (j, &p) in pooled.iter().enumerate() {
            for c in 0..NUM_CLASSES {
                grad_sw[(j, c)] += p * dlogits[c];
            }
        }
        let grad_sb = dlogits.clone();

        let d_pooled = self.softmax_weights.dot(&dlogits);
        let weights: Vec<f64> = self.pooling.weights(mode).to_vec();
        let last = outputs.last().expect("layers non-empty");
        let mut d_h = topn_pool_backward(last, &weights, &d_pooled);

        let mut layer_grads: Vec<(Array2<f64>, Array1<f64>)> =
            Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            // Undo the dropout scaling and differentiate the activation.
            if let Some(masks) = masks {
                d_h *= &masks[k];
            }
            let h = &outputs[k];
            let h_unmasked_prime = if let Some(masks) = masks {
                // outputs[k] stores masked values; recover activation output
                // where the mask is nonzero (zeroed units contribute no
                // gradient anyway).
                Array2::from_shape_fn(h.dim(), |(r, c)| {
                    let m = masks[k][c];
                    if m == 0.0 {
                        0.0
                    } else {
                        layer.act_prime_from_output(h[(r, c)] / m)
                    }
                })
            } else {
                Array2::from_shape_fn(h.dim(), |(r, c)| layer.act_prime_from_output(h[(r, c)]))
            };
            let d_pre = &d_h * &h_unmasked_prime;
            let input: &Array2<f64> = if k == 0 { a } else { &outputs[k - 1] };
            let grad_w = input.t().dot(&d_pre) + &(&layer.weights * l2);
            let grad_b = d_pre.sum_axis(Axis(0));
            if k > 0 {
                d_h = d_pre.dot(&layer.weights.t());
            }
            layer_grads.push((grad_w, grad_b));
        }
        layer_grads.reverse();
        (
            loss,
            MlpGrads {
                layers: layer_grads,
                softmax_weights: grad_sw,
                softmax_bias: grad_sb,
            },
        )
    }

    /// Deterministic prediction for a clip: no noise, no dropout, test-time
    /// pooling weights.
    pub fn predict_clip(&self, seq: &FeatureSequence) -> Result<ClassDistribution> {
        if seq.features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: seq.features.ncols(),
            });
        }
        let (_, _, probs) = self.forward_probs(&seq.features, PoolMode::Test, None);
        ClassDistribution::normalized(probs)
    }

    /// Accuracy with deterministic forward passes.
    pub fn accuracy_on(&self, clips: &[AudioClip]) -> Result<f64> {
        if clips.is_empty() {
            return Err(Error::EmptyInput("accuracy on empty clip set".into()));
        }
        let mut hits = 0usize;
        for clip in clips {
            let p = self.predict_clip(&clip.seq)?;
            if crate::emotions::argmax_label(&p)? == clip.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / clips.len() as f64)
    }

    /// Largest incoming-weight L2 norm over all hidden units.
    pub fn max_incoming_norm(&self) -> f64 {
        let mut max = 0.0f64;
        for layer in &self.layers {
            for j in 0..layer.weights.ncols() {
                let norm: f64 = layer
                    .weights
                    .column(j)
                    .iter()
                    .map(|w| w * w)
                    .sum::<f64>()
                    .sqrt();
                max = max.max(norm);
            }
        }
        max
    }

    /// Projects every hidden unit's incoming weights back to the max-norm
    /// ball.
    fn project_max_norm(&mut self, bound: f64) {
        for layer in &mut self.layers {
            for j in 0..layer.weights.ncols() {
                let norm: f64 = layer
                    .weights
                    .column(j)
                    .iter()
                    .map(|w| w * w)
                    .sum::<f64>()
                    .sqrt();
                if norm > bound {
                    let scale = bound / norm;
                    for w in layer.weights.column_mut(j).iter_mut() {
                        *w *= scale;
                    }
                }
            }
        }
    }
}

/// Optimizer states for every MLP tensor.
struct MlpOptimizer {
    layer_states: Vec<(RmsPropState<f64>, RmsPropState<f64>)>,
    softmax_w: RmsPropState<f64>,
    softmax_b: RmsPropState<f64>,
}

impl MlpOptimizer {
    fn new(mlp: &Mlp) -> Self {
        Self {
            layer_states: mlp
                .layers
                .iter()
                .map(|l| {
                    (
                        RmsPropState::new(l.weights.len()),
                        RmsPropState::new(l.bias.len()),
                    )
                })
                .collect(),
            softmax_w: RmsPropState::new(mlp.softmax_weights.len()),
            softmax_b: RmsPropState::new(mlp.softmax_bias.len()),
        }
    }

    fn step(&mut self, cfg: &RmsPropConfig<f64>, mlp: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        for (k, (ws, bs)) in self.layer_states.iter_mut().enumerate() {
            ws.step(
                cfg,
                mlp.layers[k].weights.as_slice_mut().expect("standard layout"),
                grads.layers[k].0.as_slice().expect("standard layout"),
            )?;
            bs.step(
                cfg,
                mlp.layers[k].bias.as_slice_mut().expect("standard layout"),
                grads.layers[k].1.as_slice().expect("standard layout"),
            )?;
        }
        self.softmax_w.step(
            cfg,
            mlp.softmax_weights.as_slice_mut().expect("standard layout"),
            grads.softmax_weights.as_slice().expect("standard layout"),
        )?;
        self.softmax_b.step(
            cfg,
            mlp.softmax_bias.as_slice_mut().expect("standard layout"),
            grads.softmax_bias.as_slice().expect("standard layout"),
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneConfig {
    pub iterations: usize,
    pub optimizer: RmsPropConfig<f64>,
    pub l2: f64,
    pub max_norm: f64,
    /// Fraction of hidden units dropped per update.
    pub hidden_dropout: f64,
    /// Fraction of timestep rows dropped per clip presentation.
    pub feature_dropout: f64,
    /// Fraction of training clips skipped each iteration.
    pub clip_dropout: f64,
    /// Iteration after which a rising validation error decays the step.
    pub lr_decay_after: usize,
    pub lr_decay: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            optimizer: RmsPropConfig::default(),
            l2: 1e-5,
            max_norm: 1.2875,
            hidden_dropout: 0.121,
            feature_dropout: 0.4,
            clip_dropout: 0.12,
            lr_decay_after: 50,
            lr_decay: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    /// Validation accuracy after each iteration.
    pub valid_accuracy: Vec<f64>,
    /// Largest post-projection incoming-weight norm seen after any update.
    pub max_unit_norm_seen: f64,
    pub best_iteration: usize,
    pub best_valid_accuracy: f64,
}

fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    let n = items.len();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Supervised fine-tuning with early stopping on validation accuracy.
/// Returns the best-on-validation parameters and a log of the run.
pub fn finetune(
    mut mlp: Mlp,
    train: &[AudioClip],
    valid: &[AudioClip],
    cfg: &FinetuneConfig,
    rng: &mut impl Rng,
) -> Result<(Mlp, TrainLog)> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyInput("fine-tuning needs train and valid clips".into()));
    }
    // Features must be centered by the caller; verify on the training set.
    let d = train[0].seq.features.ncols();
    let mut mean = vec![0.0f64; d];
    let mut rows = 0usize;
    for clip in train {
        for r in clip.seq.features.rows() {
            for (j, &v) in r.iter().enumerate() {
                mean[j] += v;
            }
        }
        rows += clip.seq.features.nrows();
    }
    let max_mean = mean
        .iter()
        .map(|m| (m / rows as f64).abs())
        .fold(0.0f64, f64::max);
    if max_mean > 1e-6 {
        return Err(Error::Config(format!(
            "features are not centered (max |mean| = {max_mean:.3e})"
        )));
    }

    let mut optimizer = MlpOptimizer::new(&mlp);
    let mut opt_cfg = cfg.optimizer;
    let mut log = TrainLog {
        valid_accuracy: Vec::with_capacity(cfg.iterations),
        max_unit_norm_seen: 0.0,
        best_iteration: 0,
        best_valid_accuracy: f64::NEG_INFINITY,
    };
    let mut best = mlp.clone();
    let mut prev_err = f64::INFINITY;

    let n = train.len();
    let skip = ((cfg.clip_dropout * n as f64).floor() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();

    for iter in 0..cfg.iterations {
        shuffle(&mut order, rng);
        for &ci in order.iter().skip(skip) {
            let clip = &train[ci];
            let d_t = clip.seq.features.nrows();
            // Shuffle timestep rows, then drop a fraction of them.
            let mut row_order: Vec<usize> = (0..d_t).collect();
            shuffle(&mut row_order, rng);
            let kept: Vec<usize> = row_order
                .iter()
                .copied()
                .filter(|_| rng.random::<f64>() >= cfg.feature_dropout)
                .collect();
            let kept = if kept.is_empty() {
                vec![row_order[0]]
            } else {
                kept
            };
            let mut a = Array2::zeros((kept.len(), d));
            for (r, &src) in kept.iter().enumerate() {
                a.row_mut(r).assign(&clip.seq.features.row(src));
            }
            // Per-unit inverted dropout masks for every hidden layer.
            let masks: Vec<Array1<f64>> = mlp
                .layers
                .iter()
                .map(|l| {
                    let keep = 1.0 - cfg.hidden_dropout;
                    Array1::from_shape_fn(l.weights.ncols(), |_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                })
                .collect();
            let (_, grads) =
                mlp.loss_and_grads(&a, clip.label, PoolMode::Train, cfg.l2, Some(&masks));
            optimizer.step(&opt_cfg, &mut mlp, &grads)?;
            mlp.project_max_norm(cfg.max_norm);
            log.max_unit_norm_seen = log.max_unit_norm_seen.max(mlp.max_incoming_norm());
        }
        let acc = mlp.accuracy_on(valid)?;
        log.valid_accuracy.push(acc);
        if acc > log.best_valid_accuracy {
            log.best_valid_accuracy = acc;
            log.best_iteration = iter;
            best = mlp.clone();
        }
        let err = 1.0 - acc;
        if iter + 1 > cfg.lr_decay_after && err > prev_err {
            opt_cfg.step_size *= cfg.lr_decay;
        }
        prev_err = err;
    }
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_mlp(rng: &mut impl Rng) -> Mlp {
        Mlp::random(3, &[5, 4], PoolingConfig::default(), rng).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences_end_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = tiny_mlp(&mut rng);
        let a = Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0));
        let label = EmotionLabel::Fear;
        let l2 = 0.01;
        let (_, grads) = mlp.loss_and_grads(&a, label, PoolMode::Train, l2, None);
        let eps = 1e-6;

        let check = |get: &dyn Fn(&Mlp) -> f64, set: &dyn Fn(&mut Mlp, f64), g: f64| {
            let mut plus = mlp.clone();
            set(&mut plus, get(&mlp) + eps);
            let mut minus = mlp.clone();
            set(&mut minus, get(&mlp) - eps);
            let fd = (plus.loss(&a, label, PoolMode::Train, l2)
                - minus.loss(&a, label, PoolMode::Train, l2))
                / (2.0 * eps);
            let rel = (g - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-4, "analytic {g} vs fd {fd}");
        };

        for (k, (gw, gb)) in grads.layers.iter().enumerate() {
            for idx in [(0, 0), (1, 2), (2, 1)] {
                check(
                    &|m: &Mlp| m.layers[k].weights[idx],
                    &|m: &mut Mlp, v| m.layers[k].weights[idx] = v,
                    gw[idx],
                );
            }
            check(
                &|m: &Mlp| m.layers[k].bias[1],
                &|m: &mut Mlp, v| m.layers[k].bias[1] = v,
                gb[1],
            );
        }
        for idx in [(0, 0), (3, 6), (1, 3)] {
            check(
                &|m: &Mlp| m.softmax_weights[idx],
                &|m: &mut Mlp, v| m.softmax_weights[idx] = v,
                grads.softmax_weights[idx],
            );
        }
        check(
            &|m: &Mlp| m.softmax_bias[2],
            &|m: &mut Mlp, v| m.softmax_bias[2] = v,
            grads.softmax_bias[2],
        );
    }

    #[test]
    fn prediction_is_permutation_and_duplication_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = tiny_mlp(&mut rng);
        let a = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let seq = FeatureSequence::new("c", a.clone()).unwrap();
        let base = mlp.predict_clip(&seq).unwrap();
        let sum: f64 = base.scores().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);

        // Permute rows.
        let perm = [4usize, 2, 0, 3, 1];
        let mut pa = Array2::zeros((5, 3));
        for (r, &src) in perm.iter().enumerate() {
            pa.row_mut(r).assign(&a.row(src));
        }
        let p = mlp
            .predict_clip(&FeatureSequence::new("c", pa).unwrap())
            .unwrap();
        assert_eq!(base.scores(), p.scores());

        // With every row duplicated at least N times, top-N per column is
        // filled by copies of the column max, so further duplication does
        // not move the prediction.
        let dup = |src: &Array2<f64>, times: usize| {
            let mut m = Array2::zeros((times * src.nrows(), 3));
            for r in 0..src.nrows() {
                for t in 0..times {
                    m.row_mut(times * r + t).assign(&src.row(r));
                }
            }
            m
        };
        let d2 = mlp
            .predict_clip(&FeatureSequence::new("c", dup(&a, 2)).unwrap())
            .unwrap();
        let d4 = mlp
            .predict_clip(&FeatureSequence::new("c", dup(&a, 4)).unwrap())
            .unwrap();
        for (x, y) in d2.scores().iter().zip(d4.scores()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_step_and_zero_dropout_keep_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mlp = tiny_mlp(&mut rng);
        let clips: Vec<AudioClip> = (0..6)
            .map(|i| {
                let mut f = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
                // Center across the whole training set afterwards; easier to
                // just build zero-mean rows two at a time.
                if i % 2 == 1 {
                    f *= -1.0;
                }
                AudioClip {
                    seq: FeatureSequence::new(format!("c{i}"), f).unwrap(),
                    label: EmotionLabel::ALL[i % NUM_CLASSES],
                }
            })
            .collect();
        // Make the train features exactly centered.
        let clips = crate::audio::center_clips(&clips, &crate::audio::feature_mean(&clips));
        let cfg = FinetuneConfig {
            iterations: 1,
            optimizer: RmsPropConfig {
                step_size: 0.0,
                ..RmsPropConfig::default()
            },
            hidden_dropout: 0.0,
            feature_dropout: 0.0,
            clip_dropout: 0.0,
            l2: 0.0,
            ..FinetuneConfig::default()
        };
        let (out, _) = finetune(mlp.clone(), &clips, &clips, &cfg, &mut rng).unwrap();
        for (a, b) in mlp.layers.iter().zip(&out.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
        }
        assert_eq!(mlp.softmax_weights, out.softmax_weights);
    }

    #[test]
    fn uncentered_features_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mlp = tiny_mlp(&mut rng);
        let clips: Vec<AudioClip> = (0..4)
            .map(|i| AudioClip {
                seq: FeatureSequence::new(
                    format!("c{i}"),
                    Array2::from_elem((3, 3), 1.0),
                )
                .unwrap(),
                label: EmotionLabel::Angry,
            })
            .collect();
        let r = finetune(mlp, &clips, &clips, &FinetuneConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}

