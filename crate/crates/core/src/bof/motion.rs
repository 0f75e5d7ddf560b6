//! Motion bag-of-words: spatio-temporal blocks are whitened, encoded by a
//! tied-weight linear autoencoder, aggregated into superblock descriptors,
//! quantized against a learned dictionary, and classified by a chi-square
//! kernel SVM on the per-video word histograms.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bof::{kmeans_fit, whiten_fit, Codebook, WhitenMode, WhiteningTransform};
use crate::classifiers::{svm_grid_search, svm_train, GridSearchPlan, LabeledDataset, TrainedSvm};
use crate::container;
use crate::emotions::{ClassDistribution, EmotionLabel};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::kernels::KernelKind;

/// Temporal extent of one block.
pub const BLOCK_T: usize = 10;
/// Spatial extent of one block.
pub const BLOCK_S: usize = 16;
/// Temporal extent of a super block.
pub const SUPER_T: usize = 14;
/// Spatial extent of a super block.
pub const SUPER_S: usize = 20;
/// Temporal stride of the dense super-block grid.
pub const STRIDE_T: usize = 7;
/// Spatial stride of the dense super-block grid.
pub const STRIDE_S: usize = 10;
/// Raw block dimensionality (t * h * w).
pub const BLOCK_DIM: usize = BLOCK_T * BLOCK_S * BLOCK_S;
/// Corner sub-block offsets inside a super block, per axis.
const CORNER_OFFSETS: [usize; 2] = [0, SUPER_S - BLOCK_S];
const CORNER_OFFSETS_T: [usize; 2] = [0, SUPER_T - BLOCK_T];

/// A video as a stack of equally sized grayscale frames.
#[derive(Debug, Clone)]
pub struct Video {
    pub frames: Vec<GrayImage>,
}

impl Video {
    pub fn new(frames: Vec<GrayImage>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("video with no frames".into()));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        if frames.iter().any(|f| f.width() != w || f.height() != h) {
            return Err(Error::Domain("video frames differ in size".into()));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn fits_block(&self) -> bool {
        self.len() >= BLOCK_T && self.height() >= BLOCK_S && self.width() >= BLOCK_S
    }

    pub fn fits_super_block(&self) -> bool {
        self.len() >= SUPER_T && self.height() >= SUPER_S && self.width() >= SUPER_S
    }

    /// Flattens the `BLOCK_T x BLOCK_S x BLOCK_S` voxels at the given
    /// origin, time-major then row-major.
    pub fn block_vector(&self, t0: usize, y0: usize, x0: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(BLOCK_DIM);
        for t in t0..t0 + BLOCK_T {
            let frame = &self.frames[t];
            for y in y0..y0 + BLOCK_S {
                for x in x0..x0 + BLOCK_S {
                    v.push(frame.get(y, x) as f64);
                }
            }
        }
        v
    }
}

/// Uniformly samples `count` random blocks across the usable videos;
/// videos smaller than a block are skipped with a warning.
pub fn sample_video_blocks(
    videos: &[(String, Video)],
    count: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let usable: Vec<&(String, Video)> = videos
        .iter()
        .filter(|(id, v)| {
            if v.fits_block() {
                true
            } else {
                log::warn!("video `{id}` smaller than a {BLOCK_T}x{BLOCK_S}x{BLOCK_S} block, skipped");
                false
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyInput(
            "no video is large enough for block sampling".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Array2::zeros((count, BLOCK_DIM));
    for i in 0..count {
        let (_, v) = usable[rng.random_range(0..usable.len())];
        let t0 = rng.random_range(0..=v.len() - BLOCK_T);
        let y0 = rng.random_range(0..=v.height() - BLOCK_S);
        let x0 = rng.random_range(0..=v.width() - BLOCK_S);
        let vec = v.block_vector(t0, y0, x0);
        for (j, &val) in vec.iter().enumerate() {
            blocks[(i, j)] = val;
        }
    }
    Ok(blocks)
}

/// Tied-weight linear autoencoder: `h = x W + b_h`, reconstruction
/// `x_hat = h W' + b_v`.
#[derive(Debug, Clone)]
pub struct TiedAutoencoder {
    /// d x hidden.
    pub weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_bias: Array1<f64>,
}

impl TiedAutoencoder {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / input as f64).sqrt();
        Self {
            weights: Array2::from_shape_fn((input, hidden), |_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            }),
            hidden_bias: Array1::zeros(hidden),
            visible_bias: Array1::zeros(input),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let x = ndarray::ArrayView1::from(x);
        (x.dot(&self.weights) + &self.hidden_bias).to_vec()
    }

    pub fn encode_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.hidden_bias
    }

    fn reconstruct_batch(&self, h: &Array2<f64>) -> Array2<f64> {
        h.dot(&self.weights.t()) + &self.visible_bias
    }

    /// Mean squared reconstruction error over the rows of `x`.
    pub fn reconstruction_error(&self, x: &Array2<f64>) -> f64 {
        let h = self.encode_batch(x);
        let r = self.reconstruct_batch(&h);
        let diff = x - &r;
        diff.iter().map(|d| d * d).sum::<f64>() / x.nrows() as f64
    }
}

#[derive(Debug, Clone)]
pub struct EncoderTrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 300,
            learning_rate: 0.0001,
            momentum: 0.9,
            epochs: 1000,
        }
    }
}

/// SGD with momentum on the tied autoencoder; returns per-epoch
/// reconstruction errors (entry 0 is before any update). Zero epochs
/// return the initialization untouched.
pub fn default_encoder_train(
    blocks: &Array2<f64>,
    cfg: &EncoderTrainConfig,
    seed: u64,
) -> Result<(TiedAutoencoder, Vec<f64>)> {
    if blocks.nrows() == 0 {
        return Err(Error::EmptyInput("encoder training without blocks".into()));
    }
    let d = blocks.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ae = TiedAutoencoder::init(d, cfg.hidden, &mut rng);
    let mut vel_w = Array2::<f64>::zeros((d, cfg.hidden));
    let mut vel_bh = Array1::<f64>::zeros(cfg.hidden);
    let mut vel_bv = Array1::<f64>::zeros(d);
    let mut errors = vec![ae.reconstruction_error(blocks)];
    let n = blocks.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for &i in &order {
            let x = blocks.row(i);
            let h = x.dot(&ae.weights) + &ae.hidden_bias;
            let r = h.dot(&ae.weights.t()) + &ae.visible_bias;
            let e = &r - &x;
            // Tied weights: dW = x' (e W) ... plus the reconstruction side
            // e' h; both terms share W.
            let grad_h = e.dot(&ae.weights);
            let gw = x
                .insert_axis(ndarray::Axis(1))
                .dot(&grad_h.view().insert_axis(ndarray::Axis(0)))
                + e.view()
                    .insert_axis(ndarray::Axis(1))
                    .dot(&h.view().insert_axis(ndarray::Axis(0)));
            vel_w = vel_w * cfg.momentum - &(&gw * cfg.learning_rate);
            ae.weights += &vel_w;
            vel_bh = vel_bh * cfg.momentum - &(&grad_h * cfg.learning_rate);
            ae.hidden_bias += &vel_bh;
            vel_bv = vel_bv * cfg.momentum - &(&e * cfg.learning_rate);
            ae.visible_bias += &vel_bv;
        }
        let err = ae.reconstruction_error(blocks);
        if !err.is_finite() {
            return Err(Error::Training(
                "autoencoder diverged; lower the learning rate".into(),
            ));
        }
        errors.push(err);
    }
    Ok((ae, errors))
}

/// Block whitening, the trained encoder, and the descriptor projection.
#[derive(Debug)]
pub struct MotionEncoder {
    pub block_whiten: WhiteningTransform,
    pub autoencoder: TiedAutoencoder,
    pub descriptor_whiten: WhiteningTransform,
}

impl MotionEncoder {
    pub fn code_dim(&self) -> usize {
        self.autoencoder.weights.ncols()
    }

    fn encode_block(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let whitened = self.block_whiten.apply(raw)?;
        Ok(self.autoencoder.encode(&whitened))
    }

    /// Concatenated codes of the eight corner sub-blocks, before the
    /// descriptor projection.
    pub fn superblock_concat(
        &self,
        video: &Video,
        t0: usize,
        y0: usize,
        x0: usize,
    ) -> Result<Vec<f64>> {
        let mut concat = Vec::with_capacity(8 * self.code_dim());
        for &dt in &CORNER_OFFSETS_T {
            for &dy in &CORNER_OFFSETS {
                for &dx in &CORNER_OFFSETS {
                    let raw = video.block_vector(t0 + dt, y0 + dy, x0 + dx);
                    concat.extend(self.encode_block(&raw)?);
                }
            }
        }
        Ok(concat)
    }

    /// Projected super-block descriptor.
    pub fn superblock_descriptor(
        &self,
        video: &Video,
        t0: usize,
        y0: usize,
        x0: usize,
    ) -> Result<Vec<f64>> {
        let concat = self.superblock_concat(video, t0, y0, x0)?;
        self.descriptor_whiten.apply(&concat)
    }
}

/// Origins of the dense super-block grid (stride 7 temporally, 10
/// spatially, i.e. 50% overlap).
pub fn superblock_grid(video: &Video) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    if !video.fits_super_block() {
        return out;
    }
    let mut t0 = 0;
    while t0 + SUPER_T <= video.len() {
        let mut y0 = 0;
        while y0 + SUPER_S <= video.height() {
            let mut x0 = 0;
            while x0 + SUPER_S <= video.width() {
                out.push((t0, y0, x0));
                x0 += STRIDE_S;
            }
            y0 += STRIDE_S;
        }
        t0 += STRIDE_T;
    }
    out
}

/// All dense super-block descriptors of a video.
pub fn dense_superblocks(encoder: &MotionEncoder, video: &Video) -> Result<Vec<Vec<f64>>> {
    let grid = superblock_grid(video);
    if grid.is_empty() {
        return Err(Error::Domain(format!(
            "video ({} frames, {}x{}) smaller than a super block",
            video.len(),
            video.height(),
            video.width()
        )));
    }
    grid.par_iter()
        .map(|&(t0, y0, x0)| encoder.superblock_descriptor(video, t0, y0, x0))
        .collect()
}

/// Writes per-video word histograms as `clip_id,h0,...,h{K-1}`.
pub fn write_histograms(rows: &[(String, Vec<f64>)], path: &Path) -> Result<()> {
    use std::io::Write;
    if rows.is_empty() {
        return Err(Error::EmptyInput("no histograms to write".into()));
    }
    let k = rows[0].1.len();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "clip_id")?;
    for i in 0..k {
        write!(out, ",h{i}")?;
    }
    writeln!(out)?;
    for (clip, h) in rows {
        if h.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: h.len(),
            });
        }
        write!(out, "{clip}")?;
        for v in h {
            write!(out, ",{v:.8e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a histogram CSV written by [`write_histograms`].
pub fn read_histograms(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    use std::io::BufRead;
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "missing header".into(),
            })
        }
    };
    let k = header.trim_end().split(',').count() - 1;
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected {} columns, got {}", k + 1, fields.len()),
            });
        }
        let mut h = Vec::with_capacity(k);
        for f in &fields[1..] {
            h.push(f.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("bad value `{f}`"),
            })?);
        }
        out.push((fields[0].trim().to_string(), h));
    }
    Ok(out)
}

/// Normalized histogram over hard nearest-centroid assignments.
pub fn assign_words(codebook: &Codebook, descriptors: &[Vec<f64>]) -> Result<Vec<f64>> {
    if descriptors.is_empty() {
        return Err(Error::EmptyInput("no descriptors to assign".into()));
    }
    let mut hist = vec![0.0; codebook.k()];
    for d in descriptors {
        hist[codebook.assign(d)] += 1.0;
    }
    for h in &mut hist {
        *h /= descriptors.len() as f64;
    }
    Ok(hist)
}

#[derive(Debug, Clone)]
pub struct MotionBowConfig {
    pub n_blocks: usize,
    /// Principal components kept for raw blocks (also the encoder width).
    pub block_pca: usize,
    /// Principal components kept for super-block descriptors.
    pub descriptor_pca: usize,
    pub words: usize,
    pub encoder: EncoderTrainConfig,
    pub svm_plan: GridSearchPlan,
    pub seed: u64,
}

impl Default for MotionBowConfig {
    fn default() -> Self {
        Self {
            n_blocks: 20_000,
            block_pca: 300,
            descriptor_pca: 100,
            words: 300,
            encoder: EncoderTrainConfig::default(),
            svm_plan: GridSearchPlan::default(),
            seed: 0,
        }
    }
}

impl MotionBowConfig {
    /// Hyperparameters as published: 200k blocks, 3000 words.
    pub fn paper_scale() -> Self {
        Self {
            n_blocks: 200_000,
            words: 3000,
            ..Self::default()
        }
    }
}

/// Trained motion expert.
#[derive(Debug)]
pub struct MotionExpert {
    pub encoder: MotionEncoder,
    pub codebook: Codebook,
    pub svm: TrainedSvm,
}

impl MotionExpert {
    pub fn histogram(&self, video: &Video) -> Result<Vec<f64>> {
        let descriptors = dense_superblocks(&self.encoder, video)?;
        assign_words(&self.codebook, &descriptors)
    }

    pub fn predict(&self, video: &Video) -> Result<ClassDistribution> {
        let hist = self.histogram(video)?;
        self.svm.predict_proba(&hist)
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header {
            model: &'static str,
            block_pca: usize,
            descriptor_pca: usize,
            words: usize,
        }
        std::fs::write(
            container::with_suffix(stem, "json"),
            serde_json::to_string_pretty(&Header {
                model: "motion_bow",
                block_pca: self.encoder.block_whiten.output_dim(),
                descriptor_pca: self.encoder.descriptor_whiten.output_dim(),
                words: self.codebook.k(),
            })?,
        )?;
        save_whiten(stem, "block_whiten", &self.encoder.block_whiten)?;
        save_whiten(stem, "desc_whiten", &self.encoder.descriptor_whiten)?;
        container::write_matrix(
            &container::with_suffix(stem, "ae.weights"),
            &self.encoder.autoencoder.weights,
        )?;
        container::write_matrix(
            &container::with_suffix(stem, "ae.hidden_bias"),
            &row_matrix(&self.encoder.autoencoder.hidden_bias),
        )?;
        container::write_matrix(
            &container::with_suffix(stem, "ae.visible_bias"),
            &row_matrix(&self.encoder.autoencoder.visible_bias),
        )?;
        container::write_matrix(
            &container::with_suffix(stem, "centroids"),
            &self.codebook.centroids,
        )?;
        self.svm.save(&container::with_suffix(stem, "svm"))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let block_whiten = load_whiten(stem, "block_whiten")?;
        let descriptor_whiten = load_whiten(stem, "desc_whiten")?;
        let weights = container::read_matrix(&container::with_suffix(stem, "ae.weights"))?;
        let hidden_bias = container::read_matrix(&container::with_suffix(stem, "ae.hidden_bias"))?
            .row(0)
            .to_owned();
        let visible_bias =
            container::read_matrix(&container::with_suffix(stem, "ae.visible_bias"))?
                .row(0)
                .to_owned();
        let centroids = container::read_matrix(&container::with_suffix(stem, "centroids"))?;
        let svm = TrainedSvm::load(&container::with_suffix(stem, "svm"))?;
        Ok(Self {
            encoder: MotionEncoder {
                block_whiten,
                autoencoder: TiedAutoencoder {
                    weights,
                    hidden_bias,
                    visible_bias,
                },
                descriptor_whiten,
            },
            codebook: Codebook { centroids },
            svm,
        })
    }
}

fn row_matrix(v: &Array1<f64>) -> Array2<f64> {
    v.clone()
        .into_shape_with_order((1, v.len()))
        .expect("row reshape")
}

fn save_whiten(stem: &Path, name: &str, t: &WhiteningTransform) -> Result<()> {
    container::write_matrix(
        &container::with_suffix(stem, &format!("{name}.mean")),
        &row_matrix(&t.mean),
    )?;
    container::write_matrix(
        &container::with_suffix(stem, &format!("{name}.proj")),
        &t.projection,
    )?;
    Ok(())
}

fn load_whiten(stem: &Path, name: &str) -> Result<WhiteningTransform> {
    let mean = container::read_matrix(&container::with_suffix(stem, &format!("{name}.mean")))?
        .row(0)
        .to_owned();
    let projection =
        container::read_matrix(&container::with_suffix(stem, &format!("{name}.proj")))?;
    let k = projection.nrows();
    Ok(WhiteningTransform {
        mean,
        projection,
        eigenvalues: vec![0.0; k],
        mode: WhitenMode::FixedK(k),
    })
}

/// End-to-end motion training: block sampling, whitening, encoder
/// training, descriptor PCA, dictionary learning, and the chi-square SVM
/// with grid search.
pub fn train_motion_expert(
    train: &[(String, Video, EmotionLabel)],
    valid: &[(String, Video, EmotionLabel)],
    cfg: &MotionBowConfig,
) -> Result<MotionExpert> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyInput("motion training needs both splits".into()));
    }
    let named: Vec<(String, Video)> = train
        .iter()
        .map(|(id, v, _)| (id.clone(), v.clone()))
        .collect();
    let blocks = sample_video_blocks(&named, cfg.n_blocks, cfg.seed)?;
    let block_whiten = whiten_fit(&blocks, WhitenMode::FixedK(cfg.block_pca))?;
    let whitened = block_whiten.apply_batch(&blocks)?;
    let enc_cfg = EncoderTrainConfig {
        hidden: cfg.block_pca,
        ..cfg.encoder.clone()
    };
    let (autoencoder, _) = default_encoder_train(&whitened, &enc_cfg, cfg.seed ^ 0x5eed)?;

    // Fit the descriptor projection on the concatenated corner codes of
    // all training super blocks.
    let half = MotionEncoder {
        block_whiten,
        autoencoder,
        descriptor_whiten: WhiteningTransform {
            mean: Array1::zeros(0),
            projection: Array2::zeros((0, 0)),
            eigenvalues: vec![],
            mode: WhitenMode::FixedK(1),
        },
    };
    let mut concats: Vec<Vec<f64>> = Vec::new();
    for (id, v, _) in train {
        let grid = superblock_grid(v);
        if grid.is_empty() {
            log::warn!("video `{id}` smaller than a super block, skipped for descriptor fit");
            continue;
        }
        let mut rows: Vec<Vec<f64>> = grid
            .par_iter()
            .map(|&(t0, y0, x0)| half.superblock_concat(v, t0, y0, x0))
            .collect::<Result<Vec<_>>>()?;
        concats.append(&mut rows);
    }
    if concats.is_empty() {
        return Err(Error::EmptyInput(
            "no training video fits a super block".into(),
        ));
    }
    let concat_dim = concats[0].len();
    let mut concat_m = Array2::zeros((concats.len(), concat_dim));
    for (i, c) in concats.iter().enumerate() {
        for (j, &v) in c.iter().enumerate() {
            concat_m[(i, j)] = v;
        }
    }
    let descriptor_whiten = whiten_fit(&concat_m, WhitenMode::FixedK(cfg.descriptor_pca))?;
    let encoder = MotionEncoder {
        block_whiten: half.block_whiten,
        autoencoder: half.autoencoder,
        descriptor_whiten,
    };

    // Dictionary over the projected descriptors.
    let projected = encoder.descriptor_whiten.apply_batch(&concat_m)?;
    let (codebook, _) = kmeans_fit(&projected, cfg.words, cfg.seed ^ 0xd1c7, 300)?;

    // Word histograms feed the chi-square SVM.
    let features = |clips: &[(String, Video, EmotionLabel)]| -> Result<LabeledDataset> {
        let rows: Vec<(String, Vec<f64>, EmotionLabel)> = clips
            .iter()
            .map(|(id, v, l)| -> Result<_> {
                let descriptors = dense_superblocks(&encoder, v)?;
                Ok((id.clone(), assign_words(&codebook, &descriptors)?, *l))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut x = Array2::zeros((rows.len(), cfg.words));
        let mut y = Vec::with_capacity(rows.len());
        let mut ids = Vec::with_capacity(rows.len());
        for (i, (id, h, l)) in rows.into_iter().enumerate() {
            for (j, v) in h.into_iter().enumerate() {
                x[(i, j)] = v;
            }
            y.push(l);
            ids.push(id);
        }
        LabeledDataset::with_ids(x, y, ids)
    };
    let train_data = features(train)?;
    let valid_data = features(valid)?;
    let result = svm_grid_search(&cfg.svm_plan, KernelKind::Chi2, &train_data, &valid_data)?;
    let svm = svm_train(&train_data, &result.config)?;
    Ok(MotionExpert {
        encoder,
        codebook,
        svm,
    })
}
