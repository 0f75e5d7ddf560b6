//! Audio-style expert: DBN pretraining (CD-1 RBM stack), an MLP with top-N
//! temporal pooling over per-timestep features, and supervised fine-tuning
//! with RMSProp + Nesterov momentum, dropout, and max-norm constraints.
//! Operates on precomputed per-timestep feature matrices.

mod mlp;
mod optim;
mod pooling;
mod rbm;

pub use mlp::{finetune, FinetuneConfig, Layer, Mlp, MlpGrads, TrainLog};
pub use optim::{RmsPropConfig, RmsPropState};
pub use pooling::{topn_pool, topn_pool_backward, PoolMode, PoolingConfig};
pub use rbm::{
    cd1_update, cd1_update_scaled, noisy_relu_bounded, pretrain_dbn, train_rbm, HiddenUnit,
    RbmConfig, RbmLayer,
};

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::emotions::{ClassDistribution, EmotionLabel};
use crate::error::{Error, Result};

/// Per-clip feature matrix: timesteps x features.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub clip_id: String,
    pub features: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(clip_id: impl Into<String>, features: Array2<f64>) -> Result<Self> {
        let clip_id = clip_id.into();
        if features.nrows() == 0 {
            return Err(Error::EmptyInput(format!(
                "clip `{clip_id}` has no timesteps"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "clip `{clip_id}` contains non-finite features"
            )));
        }
        Ok(Self { clip_id, features })
    }
}

/// A labeled clip.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub seq: FeatureSequence,
    pub label: EmotionLabel,
}

/// Per-dimension mean over all timesteps of all clips.
pub fn feature_mean(clips: &[AudioClip]) -> Array1<f64> {
    if clips.is_empty() {
        return Array1::zeros(0);
    }
    let d = clips[0].seq.features.ncols();
    let mut mean = Array1::<f64>::zeros(d);
    let mut rows = 0usize;
    for c in clips {
        for r in c.seq.features.rows() {
            mean += &r;
        }
        rows += c.seq.features.nrows();
    }
    mean / rows as f64
}

/// Returns copies of the clips with `mean` subtracted from every timestep.
pub fn center_clips(clips: &[AudioClip], mean: &Array1<f64>) -> Vec<AudioClip> {
    clips
        .iter()
        .map(|c| AudioClip {
            seq: FeatureSequence {
                clip_id: c.seq.clip_id.clone(),
                features: &c.seq.features - mean,
            },
            label: c.label,
        })
        .collect()
}

/// Full expert configuration: RBM stack plus fine-tuning settings.
#[derive(Debug, Clone)]
pub struct AudioExpertConfig {
    pub rbm_layers: Vec<RbmConfig>,
    pub pooling: PoolingConfig,
    pub finetune: FinetuneConfig,
}

impl AudioExpertConfig {
    /// Three RBM layers of `hidden` units: a noisy-rectifier Gaussian RBM
    /// followed by two Gaussian-Bernoulli layers, learning rates 0.0006,
    /// 0.0005, 0.001 and L2 2e-3, 2e-4, 2e-4, 15 epochs each.
    pub fn with_sizes(input_dim: usize, hidden: usize) -> Self {
        let mk = |visible, unit, lr, l2| {
            let mut c = RbmConfig::new(visible, hidden, unit);
            c.learning_rate = lr;
            c.l2 = l2;
            c.epochs = 15;
            c
        };
        Self {
            rbm_layers: vec![
                mk(input_dim, HiddenUnit::NoisyRelu { alpha: 6.0 }, 0.0006, 2e-3),
                mk(hidden, HiddenUnit::Bernoulli, 0.0005, 2e-4),
                mk(hidden, HiddenUnit::Bernoulli, 0.001, 2e-4),
            ],
            pooling: PoolingConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }
}

/// Trained audio expert: the fine-tuned MLP plus the centering mean it
/// expects to be applied to incoming features.
#[derive(Debug, Clone)]
pub struct AudioExpert {
    pub mlp: Mlp,
    pub feature_mean: Array1<f64>,
}

impl AudioExpert {
    pub fn predict(&self, seq: &FeatureSequence) -> Result<ClassDistribution> {
        let centered = FeatureSequence {
            clip_id: seq.clip_id.clone(),
            features: &seq.features - &self.feature_mean,
        };
        self.mlp.predict_clip(&centered)
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header {
            model: &'static str,
            hidden_layers: usize,
            pooling_n: usize,
            train_weights: Vec<f64>,
            test_weights: Vec<f64>,
        }
        let header = Header {
            model: "audio",
            hidden_layers: self.mlp.layers.len(),
            pooling_n: self.mlp.pooling.n,
            train_weights: self.mlp.pooling.train_weights.clone(),
            test_weights: self.mlp.pooling.test_weights.clone(),
        };
        std::fs::write(
            container::with_suffix(stem, "json"),
            serde_json::to_string_pretty(&header)?,
        )?;
        for (k, layer) in self.mlp.layers.iter().enumerate() {
            container::write_matrix(
                &container::with_suffix(stem, &format!("layer{k}.weights")),
                &layer.weights,
            )?;
            container::write_matrix(
                &container::with_suffix(stem, &format!("layer{k}.bias")),
                &row_matrix(&layer.bias),
            )?;
        }
        container::write_matrix(
            &container::with_suffix(stem, "softmax.weights"),
            &self.mlp.softmax_weights,
        )?;
        container::write_matrix(
            &container::with_suffix(stem, "softmax.bias"),
            &row_matrix(&self.mlp.softmax_bias),
        )?;
        container::write_matrix(
            &container::with_suffix(stem, "mean"),
            &row_matrix(&self.feature_mean),
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            hidden_layers: usize,
            pooling_n: usize,
            train_weights: Vec<f64>,
            test_weights: Vec<f64>,
        }
        let header: Header = serde_json::from_str(&std::fs::read_to_string(
            container::with_suffix(stem, "json"),
        )?)?;
        let mut layers = Vec::with_capacity(header.hidden_layers);
        for k in 0..header.hidden_layers {
            let weights = container::read_matrix(&container::with_suffix(
                stem,
                &format!("layer{k}.weights"),
            ))?;
            let bias = container::read_matrix(&container::with_suffix(
                stem,
                &format!("layer{k}.bias"),
            ))?
            .row(0)
            .to_owned();
            layers.push(Layer {
                weights,
                bias,
                activation: if k == 0 {
                    mlp::Activation::Relu
                } else {
                    mlp::Activation::Sigmoid
                },
            });
        }
        let softmax_weights =
            container::read_matrix(&container::with_suffix(stem, "softmax.weights"))?;
        let softmax_bias = container::read_matrix(&container::with_suffix(stem, "softmax.bias"))?
            .row(0)
            .to_owned();
        let feature_mean = container::read_matrix(&container::with_suffix(stem, "mean"))?
            .row(0)
            .to_owned();
        let pooling = PoolingConfig {
            n: header.pooling_n,
            train_weights: header.train_weights,
            test_weights: header.test_weights,
        };
        pooling.validate()?;
        Ok(Self {
            mlp: Mlp {
                layers,
                softmax_weights,
                softmax_bias,
                pooling,
            },
            feature_mean,
        })
    }
}

fn row_matrix(v: &Array1<f64>) -> Array2<f64> {
    v.clone()
        .into_shape_with_order((1, v.len()))
        .expect("row reshape")
}

/// Pretrains the DBN on the centered training features, initializes the
/// MLP from it, and fine-tunes with early stopping.
pub fn train_audio_expert(
    cfg: &AudioExpertConfig,
    train: &[AudioClip],
    valid: &[AudioClip],
    rng: &mut impl Rng,
) -> Result<(AudioExpert, TrainLog)> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyInput("audio training needs both splits".into()));
    }
    let mean = feature_mean(train);
    let train_c = center_clips(train, &mean);
    let valid_c = center_clips(valid, &mean);

    // All timesteps of all training clips feed the unsupervised stage.
    let d = train_c[0].seq.features.ncols();
    let total_rows: usize = train_c.iter().map(|c| c.seq.features.nrows()).sum();
    let mut stacked = Array2::zeros((total_rows, d));
    let mut r = 0;
    for clip in &train_c {
        for row in clip.seq.features.rows() {
            stacked.row_mut(r).assign(&row);
            r += 1;
        }
    }
    let dbn = pretrain_dbn(&cfg.rbm_layers, &stacked, rng)?;
    let mlp = Mlp::from_dbn(&dbn, cfg.pooling.clone(), rng)?;
    let (best, log) = finetune(mlp, &train_c, &valid_c, &cfg.finetune, rng)?;
    Ok((
        AudioExpert {
            mlp: best,
            feature_mean: mean,
        },
        log,
    ))
}
