//! Bag-of-features machinery shared by the mouth-image and motion
//! pipelines: patch extraction and normalization, PCA whitening, k-means
//! codebooks, triangle encoding, and region pooling.

mod encode;
mod kmeans;
pub mod motion;
mod whiten;

pub use encode::triangle_activation;
pub use kmeans::{kmeans_fit, Codebook};
pub use whiten::{whiten_fit, WhitenMode, WhiteningTransform, EIGENVALUE_FLOOR};

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{logreg_train, LabeledDataset, LogisticModel, LogregConfig};
use crate::container;
use crate::emotions::{ClassDistribution, EmotionLabel};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::math::{mean, variance};

/// Mouth image side in pixels.
pub const MOUTH_SIZE: usize = 96;
/// Regions per side of the grid (16 regions total).
pub const GRID_SIDE: usize = 4;
/// Region side in pixels.
pub const REGION_SIZE: usize = MOUTH_SIZE / GRID_SIDE;
/// Patch side in pixels.
pub const PATCH_SIZE: usize = 8;
/// Number of regions.
pub const NUM_REGIONS: usize = GRID_SIDE * GRID_SIDE;
/// Dense stride-1 patches per region side.
pub const PATCHES_PER_SIDE: usize = REGION_SIZE - PATCH_SIZE + 1;

/// Variance guard below which a normalized patch becomes all-zero.
pub const PATCH_VAR_EPS: f64 = 1e-8;

/// Dense 8x8 patches of every 24x24 region of a 96x96 mouth image, region
/// index row-major, patches row-major within each region.
pub fn extract_patches(img: &GrayImage) -> Result<Vec<Vec<Vec<f64>>>> {
    if img.width() != MOUTH_SIZE || img.height() != MOUTH_SIZE {
        return Err(Error::DimensionMismatch {
            expected: MOUTH_SIZE,
            got: img.width().max(img.height()),
        });
    }
    let mut regions = Vec::with_capacity(NUM_REGIONS);
    for gy in 0..GRID_SIDE {
        for gx in 0..GRID_SIDE {
            let base_r = gy * REGION_SIZE;
            let base_c = gx * REGION_SIZE;
            let mut patches = Vec::with_capacity(PATCHES_PER_SIDE * PATCHES_PER_SIDE);
            for pr in 0..PATCHES_PER_SIDE {
                for pc in 0..PATCHES_PER_SIDE {
                    let mut patch = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
                    for r in 0..PATCH_SIZE {
                        for c in 0..PATCH_SIZE {
                            patch.push(img.get(base_r + pr + r, base_c + pc + c) as f64);
                        }
                    }
                    patches.push(patch);
                }
            }
            regions.push(patches);
        }
    }
    Ok(regions)
}

/// Sets the patch mean to 0 and variance to 1; constant patches (variance
/// under the guard) become all-zero.
pub fn normalize_patch(patch: &[f64]) -> Vec<f64> {
    let m = mean(patch);
    let var = variance(patch);
    if var <= PATCH_VAR_EPS {
        return vec![0.0; patch.len()];
    }
    let inv = 1.0 / var.sqrt();
    patch.iter().map(|&v| (v - m) * inv).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolStat {
    Mean,
    Std,
}

/// Pools activations across a region's patches, per feature.
pub fn pool_region(activations: &[Vec<f64>], stat: PoolStat) -> Result<Vec<f64>> {
    if activations.is_empty() {
        return Err(Error::EmptyInput("pooling over an empty region".into()));
    }
    let k = activations[0].len();
    let mut out = vec![0.0; k];
    match stat {
        PoolStat::Mean => {
            for a in activations {
                for (o, &v) in out.iter_mut().zip(a) {
                    *o += v;
                }
            }
            for o in &mut out {
                *o /= activations.len() as f64;
            }
        }
        PoolStat::Std => {
            for (j, o) in out.iter_mut().enumerate() {
                let col: Vec<f64> = activations.iter().map(|a| a[j]).collect();
                *o = variance(&col).sqrt();
            }
        }
    }
    Ok(out)
}

/// Rectangle of the face image treated as the mouth area (half-open pixel
/// ranges), resized to [`MOUTH_SIZE`] squared before feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MouthRect {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Default for MouthRect {
    fn default() -> Self {
        // Central-lower crop of a 96x96 face render.
        Self {
            top: 56,
            bottom: 96,
            left: 16,
            right: 80,
        }
    }
}

/// Crops the mouth rectangle out of a face image and resamples it to
/// 96x96.
pub fn mouth_crop(face: &GrayImage, rect: &MouthRect) -> Result<GrayImage> {
    if rect.bottom <= rect.top
        || rect.right <= rect.left
        || rect.bottom > face.height()
        || rect.right > face.width()
    {
        return Err(Error::Config(format!("mouth rectangle {rect:?} outside face")));
    }
    Ok(face.crop_resize(
        rect.left as f32,
        rect.top as f32,
        rect.right as f32,
        rect.bottom as f32,
        MOUTH_SIZE,
        MOUTH_SIZE,
    ))
}

#[derive(Debug, Clone)]
pub struct BagOfMouthConfig {
    /// Centroids per region.
    pub codebook_size: usize,
    pub variance_fraction: f64,
    /// Patches subsampled per region for the whitening and k-means fits.
    pub fit_patches_per_region: usize,
    pub pool: PoolStat,
    pub logreg: LogregConfig,
    pub mouth_rect: MouthRect,
    pub seed: u64,
}

impl Default for BagOfMouthConfig {
    fn default() -> Self {
        Self {
            codebook_size: 400,
            variance_fraction: 0.9,
            fit_patches_per_region: 20_000,
            pool: PoolStat::Mean,
            logreg: LogregConfig::default(),
            mouth_rect: MouthRect::default(),
            seed: 0,
        }
    }
}

/// Trained mouth pipeline: per-region whitening and codebooks plus the
/// frame-level softmax classifier.
#[derive(Debug)]
pub struct BagOfMouthModel {
    pub transforms: Vec<WhiteningTransform>,
    pub codebooks: Vec<Codebook>,
    pub logreg: LogisticModel,
    pub pool: PoolStat,
    pub mouth_rect: MouthRect,
}

impl BagOfMouthModel {
    /// Pooled triangle-activation descriptor of one face image
    /// (`NUM_REGIONS * codebook_size` dimensions).
    pub fn descriptor(&self, face: &GrayImage) -> Result<Vec<f64>> {
        descriptor_for_face(
            &self.transforms,
            &self.codebooks,
            self.pool,
            &self.mouth_rect,
            face,
        )
    }

    /// Frame probabilities from the softmax classifier.
    pub fn predict_frame(&self, face: &GrayImage) -> Result<ClassDistribution> {
        let d = self.descriptor(face)?;
        self.logreg.predict_proba(&d)
    }

    /// Video prediction: the mean of its frame distributions.
    pub fn predict_video(&self, frames: &[GrayImage]) -> Result<ClassDistribution> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("video with zero frames".into()));
        }
        let per_frame: Vec<ClassDistribution> = frames
            .par_iter()
            .map(|f| self.predict_frame(f))
            .collect::<Result<Vec<_>>>()?;
        let mut scores = [0.0; crate::NUM_CLASSES];
        for p in &per_frame {
            for (s, &v) in scores.iter_mut().zip(p.scores()) {
                *s += v;
            }
        }
        for s in &mut scores {
            *s /= per_frame.len() as f64;
        }
        ClassDistribution::normalized(scores)
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header {
            model: &'static str,
            regions: usize,
            codebook_size: usize,
            pool: PoolStat,
            mouth_rect: MouthRect,
            region_dims: Vec<usize>,
        }
        let header = Header {
            model: "bag_of_mouth",
            regions: NUM_REGIONS,
            codebook_size: self.codebooks[0].k(),
            pool: self.pool,
            mouth_rect: self.mouth_rect,
            region_dims: self.transforms.iter().map(|t| t.output_dim()).collect(),
        };
        std::fs::write(
            container::with_suffix(stem, "json"),
            serde_json::to_string_pretty(&header)?,
        )?;
        for (i, t) in self.transforms.iter().enumerate() {
            container::write_matrix(
                &container::with_suffix(stem, &format!("region{i}.mean")),
                &row_matrix(&t.mean),
            )?;
            container::write_matrix(
                &container::with_suffix(stem, &format!("region{i}.proj")),
                &t.projection,
            )?;
        }
        for (i, cb) in self.codebooks.iter().enumerate() {
            container::write_matrix(
                &container::with_suffix(stem, &format!("region{i}.centroids")),
                &cb.centroids,
            )?;
        }
        self.logreg
            .save(&container::with_suffix(stem, "logreg"))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            regions: usize,
            pool: PoolStat,
            mouth_rect: MouthRect,
        }
        let header: Header = serde_json::from_str(&std::fs::read_to_string(
            container::with_suffix(stem, "json"),
        )?)?;
        let mut transforms = Vec::with_capacity(header.regions);
        let mut codebooks = Vec::with_capacity(header.regions);
        for i in 0..header.regions {
            let mean = container::read_matrix(&container::with_suffix(
                stem,
                &format!("region{i}.mean"),
            ))?
            .row(0)
            .to_owned();
            let projection = container::read_matrix(&container::with_suffix(
                stem,
                &format!("region{i}.proj"),
            ))?;
            let eigenvalues = vec![0.0; projection.nrows()];
            transforms.push(WhiteningTransform {
                mean,
                projection,
                eigenvalues,
                mode: WhitenMode::VarianceFraction(0.9),
            });
            let centroids = container::read_matrix(&container::with_suffix(
                stem,
                &format!("region{i}.centroids"),
            ))?;
            codebooks.push(Codebook { centroids });
        }
        let logreg = LogisticModel::load(&container::with_suffix(stem, "logreg"))?;
        Ok(Self {
            transforms,
            codebooks,
            logreg,
            pool: header.pool,
            mouth_rect: header.mouth_rect,
        })
    }
}

fn row_matrix(v: &Array1<f64>) -> Array2<f64> {
    v.clone()
        .into_shape_with_order((1, v.len()))
        .expect("row reshape")
}

fn descriptor_for_face(
    transforms: &[WhiteningTransform],
    codebooks: &[Codebook],
    pool: PoolStat,
    rect: &MouthRect,
    face: &GrayImage,
) -> Result<Vec<f64>> {
    let mouth = mouth_crop(face, rect)?;
    let regions = extract_patches(&mouth)?;
    let mut descriptor = Vec::with_capacity(NUM_REGIONS * codebooks[0].k());
    for (ri, patches) in regions.iter().enumerate() {
        let activations: Vec<Vec<f64>> = patches
            .iter()
            .map(|p| -> Result<Vec<f64>> {
                let normalized = normalize_patch(p);
                let whitened = transforms[ri].apply(&normalized)?;
                Ok(triangle_activation(&codebooks[ri].distances(&whitened)))
            })
            .collect::<Result<Vec<_>>>()?;
        descriptor.extend(pool_region(&activations, pool)?);
    }
    Ok(descriptor)
}

/// Trains the mouth pipeline frame by frame: per-region whitening and
/// k-means on normalized patches, then logistic regression on pooled
/// triangle activations.
pub fn bag_of_mouth_train(
    frames: &[(GrayImage, EmotionLabel)],
    cfg: &BagOfMouthConfig,
) -> Result<BagOfMouthModel> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no training frames".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Normalized patches per region across all training frames.
    let per_frame_regions: Vec<Vec<Vec<Vec<f64>>>> = frames
        .par_iter()
        .map(|(face, _)| -> Result<_> {
            let mouth = mouth_crop(face, &cfg.mouth_rect)?;
            let regions = extract_patches(&mouth)?;
            Ok(regions
                .into_iter()
                .map(|ps| ps.iter().map(|p| normalize_patch(p)).collect::<Vec<_>>())
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut transforms = Vec::with_capacity(NUM_REGIONS);
    let mut codebooks = Vec::with_capacity(NUM_REGIONS);
    for ri in 0..NUM_REGIONS {
        let total: usize = per_frame_regions.iter().map(|f| f[ri].len()).sum();
        let take = cfg.fit_patches_per_region.min(total);
        // Deterministic subsample without replacement over the flat index.
        let mut indices: Vec<usize> = (0..total).collect();
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        indices.truncate(take);
        indices.sort_unstable();
        let dim = PATCH_SIZE * PATCH_SIZE;
        let mut fit = Array2::zeros((take, dim));
        for (row, &flat) in indices.iter().enumerate() {
            let mut seen = flat;
            for f in &per_frame_regions {
                if seen < f[ri].len() {
                    for (j, &v) in f[ri][seen].iter().enumerate() {
                        fit[(row, j)] = v;
                    }
                    break;
                }
                seen -= f[ri].len();
            }
        }
        let transform = whiten_fit(&fit, WhitenMode::VarianceFraction(cfg.variance_fraction))?;
        let whitened = transform.apply_batch(&fit)?;
        let (codebook, _) = kmeans_fit(&whitened, cfg.codebook_size, cfg.seed ^ ri as u64, 300)?;
        transforms.push(transform);
        codebooks.push(codebook);
    }

    // Frame descriptors feed the softmax classifier.
    let descriptors: Vec<Vec<f64>> = frames
        .par_iter()
        .map(|(face, _)| {
            descriptor_for_face(&transforms, &codebooks, cfg.pool, &cfg.mouth_rect, face)
        })
        .collect::<Result<Vec<_>>>()?;
    let d = descriptors[0].len();
    let mut x = Array2::zeros((frames.len(), d));
    for (i, desc) in descriptors.iter().enumerate() {
        for (j, &v) in desc.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let y: Vec<EmotionLabel> = frames.iter().map(|(_, l)| *l).collect();
    let data = LabeledDataset::new(x, y)?;
    let logreg = logreg_train(&data, &cfg.logreg)?;
    Ok(BagOfMouthModel {
        transforms,
        codebooks,
        logreg,
        pool: cfg.pool,
        mouth_rect: cfg.mouth_rect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotions::argmax_label;
    use crate::synth;

    #[test]
    fn patch_counts_match_the_grid() {
        let img = GrayImage::from_fn(96, 96, |r, c| ((r * 7 + c) % 251) as f32);
        let regions = extract_patches(&img).unwrap();
        assert_eq!(regions.len(), NUM_REGIONS);
        for patches in &regions {
            assert_eq!(patches.len(), PATCHES_PER_SIDE * PATCHES_PER_SIDE);
            assert_eq!(PATCHES_PER_SIDE * PATCHES_PER_SIDE, 289);
        }
        // First patch of region (0, 0) equals the source window.
        let p = &regions[0][0];
        for r in 0..PATCH_SIZE {
            for c in 0..PATCH_SIZE {
                assert_eq!(p[r * PATCH_SIZE + c], img.get(r, c) as f64);
            }
        }
        // First patch of region (1, 0) starts 24 rows down.
        let p = &regions[GRID_SIDE][0];
        assert_eq!(p[0], img.get(REGION_SIZE, 0) as f64);
    }

    #[test]
    fn normalize_patch_properties() {
        let constant = vec![5.0; 64];
        assert!(normalize_patch(&constant).iter().all(|&v| v == 0.0));

        let patch: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let n = normalize_patch(&patch);
        assert!(mean(&n).abs() < 1e-12);
        assert!((variance(&n) - 1.0).abs() < 1e-12);

        // Affine invariance (positive scale).
        let affine: Vec<f64> = patch.iter().map(|&v| 3.0 * v + 11.0).collect();
        let na = normalize_patch(&affine);
        for (a, b) in n.iter().zip(&na) {
            assert!((a - b).abs() < 1e-12);
        }

        // Already standardized input is unchanged.
        let again = normalize_patch(&n);
        for (a, b) in n.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pooling_modes() {
        let acts = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
        let m = pool_region(&acts, PoolStat::Mean).unwrap();
        assert_eq!(m, vec![2.0, 0.0]);
        let s = pool_region(&acts, PoolStat::Std).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);

        let single = pool_region(&acts[..1], PoolStat::Mean).unwrap();
        assert_eq!(single, acts[0]);

        let identical = vec![vec![0.4, 0.2]; 5];
        let z = pool_region(&identical, PoolStat::Std).unwrap();
        assert!(z.iter().all(|&v| v.abs() < 1e-12));

        assert!(pool_region(&[], PoolStat::Mean).is_err());
    }

    #[test]
    fn mouth_crop_shape_and_bad_rect() {
        let face = GrayImage::from_fn(96, 96, |r, c| (r + c) as f32);
        let m = mouth_crop(&face, &MouthRect::default()).unwrap();
        assert_eq!(m.width(), MOUTH_SIZE);
        assert_eq!(m.height(), MOUTH_SIZE);
        let bad = MouthRect {
            top: 90,
            bottom: 200,
            left: 0,
            right: 10,
        };
        assert!(mouth_crop(&face, &bad).is_err());
    }

    #[test]
    fn mouth_pipeline_beats_chance_on_textured_faces() {
        let clips = synth::mouth_faces(31, 42, 2);
        let train_frames: Vec<(GrayImage, EmotionLabel)> = clips
            .iter()
            .take(28)
            .flat_map(|(_, frames, label)| frames.iter().map(|f| (f.clone(), *label)))
            .collect();
        let cfg = BagOfMouthConfig {
            codebook_size: 24,
            fit_patches_per_region: 1500,
            seed: 5,
            ..BagOfMouthConfig::default()
        };
        let model = bag_of_mouth_train(&train_frames, &cfg).unwrap();

        // Validation accuracy on held-out clips, video-level predictions.
        let mut hits = 0usize;
        let valid = &clips[28..];
        for (_, frames, label) in valid {
            let p = model.predict_video(frames).unwrap();
            let sum: f64 = p.scores().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            if argmax_label(&p).unwrap() == *label {
                hits += 1;
            }
        }
        let acc = hits as f64 / valid.len() as f64;
        assert!(acc > 1.0 / 7.0, "accuracy {acc} not above chance");

        // Descriptor length is regions x codebook size.
        let d = model.descriptor(&clips[0].1[0]).unwrap();
        assert_eq!(d.len(), NUM_REGIONS * 24);

        // Single-frame video equals its frame prediction.
        let f = &clips[0].1[0];
        let v = model.predict_video(std::slice::from_ref(f)).unwrap();
        let fr = model.predict_frame(f).unwrap();
        for (a, b) in v.scores().iter().zip(fr.scores()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_size_descriptor_is_6400_dimensional() {
        // 16 regions x 400 centroids; checked structurally without a full
        // 400-centroid fit.
        assert_eq!(NUM_REGIONS * BagOfMouthConfig::default().codebook_size, 6400);
    }

    #[test]
    fn mouth_model_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clips = synth::mouth_faces(77, 14, 1);
        let frames: Vec<(GrayImage, EmotionLabel)> = clips
            .iter()
            .flat_map(|(_, fs, l)| fs.iter().map(|f| (f.clone(), *l)))
            .collect();
        let cfg = BagOfMouthConfig {
            codebook_size: 8,
            fit_patches_per_region: 400,
            seed: 2,
            ..BagOfMouthConfig::default()
        };
        let model = bag_of_mouth_train(&frames, &cfg).unwrap();
        let stem = dir.path().join("mouth");
        model.save(&stem).unwrap();
        let loaded = BagOfMouthModel::load(&stem).unwrap();
        let p1 = model.predict_frame(&frames[0].0).unwrap();
        let p2 = loaded.predict_frame(&frames[0].0).unwrap();
        for (a, b) in p1.scores().iter().zip(p2.scores()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }
}
