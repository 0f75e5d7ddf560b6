//! Seeded synthetic datasets used by the test suites and the demo fixture
//! generator: complementary expert bundles, audio-style feature clips,
//! textured mouth images, moving-grating videos, and jittery facetubes.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{AudioClip, FeatureSequence};
use crate::emotions::{
    ClassDistribution, EmotionLabel, PredictionEntry, PredictionSet, Split,
};
use crate::facetube::{BoundingBox, FaceTube};
use crate::fusion::ExpertBundle;
use crate::image::GrayImage;
use crate::{Scalar, NUM_CLASSES};

/// Round-robin class for clip `i`.
pub fn clip_label(i: usize) -> EmotionLabel {
    EmotionLabel::ALL[i % NUM_CLASSES]
}

/// 50/25/25 train/valid/test split by clip index.
pub fn clip_split(i: usize, n: usize) -> Split {
    if i < n / 2 {
        Split::Train
    } else if i < (3 * n) / 4 {
        Split::Valid
    } else {
        Split::Test
    }
}

pub fn clip_id(i: usize) -> String {
    format!("clip{i:04}")
}

fn noise_distribution(rng: &mut impl Rng) -> ClassDistribution {
    loop {
        let mut scores = [0.0; NUM_CLASSES];
        let mut sum = 0.0;
        for s in &mut scores {
            let v: f64 = rng.random();
            *s = v;
            sum += v;
        }
        if sum > 0.0 {
            for s in &mut scores {
                *s /= sum;
            }
            return ClassDistribution::normalized(scores)
                .expect("normalized by construction");
        }
    }
}

fn confident_distribution(label: EmotionLabel, confidence: f64, rng: &mut impl Rng) -> ClassDistribution {
    let mut scores = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for s in &mut scores {
        let v: f64 = rng.random::<f64>() * (1.0 - confidence);
        *s = v;
        sum += v;
    }
    for s in &mut scores {
        *s *= (1.0 - confidence) / sum;
    }
    scores[label.index()] += confidence;
    let total: f64 = scores.iter().sum();
    for s in &mut scores {
        *s /= total;
    }
    ClassDistribution::normalized(scores).expect("normalized by construction")
}

/// Classes each of the four complementary experts is reliable on.
pub const EXPERT_SPECIALTIES: [&[usize]; 4] = [&[0, 1], &[2, 3], &[4, 5], &[6]];

/// Bundle of 4 experts, each reliable on a disjoint subset of the 7
/// classes and near-uniform elsewhere, over `n_clips` clips split
/// train/valid/test. Every entry carries its gold label.
pub fn complementary_bundle(seed: u64, n_clips: usize) -> ExpertBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<String> = (0..4).map(|m| format!("expert{m}")).collect();
    // per model, per split: entries
    let mut entries: Vec<std::collections::BTreeMap<Split, Vec<PredictionEntry>>> =
        vec![Default::default(); 4];
    for i in 0..n_clips {
        let label = clip_label(i);
        let split = clip_split(i, n_clips);
        for (m, specialties) in EXPERT_SPECIALTIES.iter().enumerate() {
            let reliable = specialties.contains(&label.index());
            let hit: f64 = rng.random();
            let dist = if reliable && hit < 0.9 {
                confident_distribution(label, 0.75, &mut rng)
            } else {
                noise_distribution(&mut rng)
            };
            entries[m].entry(split).or_default().push(PredictionEntry {
                clip_id: clip_id(i),
                dist,
                gold: Some(label),
            });
        }
    }
    let per_model: Vec<Vec<PredictionSet>> = entries
        .into_iter()
        .map(|by_split| {
            by_split
                .into_iter()
                .map(|(split, es)| PredictionSet::new(split, es).expect("unique ids"))
                .collect()
        })
        .collect();
    ExpertBundle::new(models, per_model).expect("aligned by construction")
}

/// Bundle of 4 experts where `perfect_idx` predicts the gold label exactly
/// and the others emit uniform noise.
pub fn bundle_with_perfect_expert(seed: u64, n_clips: usize, perfect_idx: usize) -> ExpertBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<String> = (0..4).map(|m| format!("expert{m}")).collect();
    let mut entries: Vec<std::collections::BTreeMap<Split, Vec<PredictionEntry>>> =
        vec![Default::default(); 4];
    for i in 0..n_clips {
        let label = clip_label(i);
        let split = clip_split(i, n_clips);
        for m in 0..4 {
            let dist = if m == perfect_idx {
                ClassDistribution::one_hot(label)
            } else {
                noise_distribution(&mut rng)
            };
            entries[m].entry(split).or_default().push(PredictionEntry {
                clip_id: clip_id(i),
                dist,
                gold: Some(label),
            });
        }
    }
    let per_model: Vec<Vec<PredictionSet>> = entries
        .into_iter()
        .map(|by_split| {
            by_split
                .into_iter()
                .map(|(split, es)| PredictionSet::new(split, es).expect("unique ids"))
                .collect()
        })
        .collect();
    ExpertBundle::new(models, per_model).expect("aligned by construction")
}

/// One synthetic audio feature matrix: class-dependent spectral peaks plus
/// noise.
pub fn audio_feature_matrix(
    label: EmotionLabel,
    d_t: usize,
    d_f: usize,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let c = label.index();
    let mut features = Array2::zeros((d_t, d_f));
    for t in 0..d_t {
        for j in 0..d_f {
            let z: f64 = StandardNormal.sample(rng);
            let mut v = 0.35 * z;
            if j == c % d_f {
                v += 1.5;
            }
            if j == (c + 3) % d_f {
                v += 0.8;
            }
            features[(t, j)] = v;
        }
    }
    features
}

/// Audio-style dataset: class-dependent spectral peaks plus noise, variable
/// timestep counts.
pub fn audio_dataset(
    seed: u64,
    n_train: usize,
    n_valid: usize,
    d_f: usize,
) -> (Vec<AudioClip>, Vec<AudioClip>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |i: usize, tag: &str| {
        let label = clip_label(i);
        let d_t = rng.random_range(4..=10);
        let features = audio_feature_matrix(label, d_t, d_f, &mut rng);
        AudioClip {
            seq: FeatureSequence::new(format!("{tag}{i:04}"), features)
                .expect("non-empty finite"),
            label,
        }
    };
    let train = (0..n_train).map(|i| make(i, "tr")).collect();
    let valid = (0..n_valid).map(|i| make(i, "va")).collect();
    (train, valid)
}

/// Class-specific stripe texture value at a pixel.
fn class_texture(class: usize, r: usize, c: usize) -> f32 {
    let periods = [2usize, 3, 4, 6, 8, 12, 16];
    let p = periods[class];
    let coord = if class % 2 == 0 { r } else { c };
    if (coord / p) % 2 == 0 {
        205.0
    } else {
        55.0
    }
}

/// 96x96 face images whose lower-central mouth region carries a
/// class-specific stripe texture; the rest is noisy background.
pub fn mouth_faces(
    seed: u64,
    n_clips: usize,
    frames_per_clip: usize,
) -> Vec<(String, Vec<GrayImage>, EmotionLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let label = clip_label(i);
        let mut frames = Vec::with_capacity(frames_per_clip);
        for _ in 0..frames_per_clip {
            let mut img = GrayImage::zeros(96, 96);
            for r in 0..96 {
                for c in 0..96 {
                    let v = if (56..96).contains(&r) && (16..80).contains(&c) {
                        class_texture(label.index(), r, c) + rng.random_range(-8.0..8.0f32)
                    } else {
                        128.0 + rng.random_range(-25.0..25.0f32)
                    };
                    img.set(r, c, v.clamp(0.0, 255.0));
                }
            }
            frames.push(img);
        }
        out.push((clip_id(i), frames, label));
    }
    out
}

/// Videos of drifting gratings: direction and speed depend on the class.
pub fn motion_videos(
    seed: u64,
    n_clips: usize,
    frames: usize,
    height: usize,
    width: usize,
) -> Vec<(String, Vec<GrayImage>, EmotionLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let label = clip_label(i);
        let k = label.index();
        let theta = k as f32 * std::f32::consts::PI / 7.0;
        let speed = 1.0 + (k % 3) as f32;
        let wavelength = 8.0 + (k % 2) as f32 * 4.0;
        let phase: f32 = rng.random_range(0.0..std::f32::consts::TAU);
        let mut clip = Vec::with_capacity(frames);
        for t in 0..frames {
            let img = GrayImage::from_fn(width, height, |r, c| {
                let proj = c as f32 * theta.cos() + r as f32 * theta.sin();
                let arg = std::f32::consts::TAU * (proj + speed * t as f32) / wavelength + phase;
                128.0 + 90.0 * arg.sin()
            });
            clip.push(img);
        }
        out.push((clip_id(i), clip, label));
    }
    out
}

/// Jittery facetube around a drifting center with slowly growing size.
pub fn jittery_tube(seed: u64, n_frames: usize) -> FaceTube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..n_frames as u32)
        .map(|i| {
            let t = i as Scalar;
            let cx = 60.0 + 0.8 * t + rng.random_range(-2.0..2.0);
            let cy = 50.0 + 0.3 * t + rng.random_range(-2.0..2.0);
            let w = 30.0 + 0.2 * t + rng.random_range(-1.5..1.5);
            let h = w * rng.random_range(0.9..1.15);
            (
                i,
                BoundingBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
                    .expect("positive extent"),
            )
        })
        .collect();
    FaceTube::new(frames).expect("increasing indices")
}

/// Per-frame probability rows for a clip: mostly confident around the gold
/// label with noisy frames mixed in.
pub fn frame_probability_rows(
    label: EmotionLabel,
    n_frames: usize,
    rng: &mut impl Rng,
) -> Vec<ClassDistribution> {
    (0..n_frames)
        .map(|_| {
            if rng.random::<f64>() < 0.75 {
                confident_distribution(label, rng.random_range(0.4..0.8), rng)
            } else {
                noise_distribution(rng)
            }
        })
        .collect()
}
