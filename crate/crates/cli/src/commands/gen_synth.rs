//! `gen-synth`: seeded synthetic fixture tree covering every pipeline
//! input, plus a ready-to-use config file.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use emofuse::emotions::{write_prediction_sets, Split};
use emofuse::error::Result;
use emofuse::facetube::write_facetube;
use emofuse::fusion::derive_seed;
use emofuse::image::write_pgm;
use emofuse::synth;

use crate::config::ResolvedConfig;
use crate::report::{stage_file, write_atomic, RunReport};

#[derive(Debug, Clone, Copy)]
pub struct SynthSizes {
    pub clips: usize,
    pub face_frames: usize,
    pub video_frames: usize,
    pub video_size: usize,
    pub audio_dim: usize,
}

pub fn run(cfg: &ResolvedConfig, sizes: SynthSizes, started: Instant) -> Result<()> {
    let out = &cfg.out;
    let seed = cfg.seed;
    let n = sizes.clips;
    let mut report = RunReport::new("gen-synth", cfg.hash("gen-synth"), seed, cfg.preset.name());

    // Labels.
    let labels: Vec<(String, Split, emofuse::emotions::EmotionLabel)> = (0..n)
        .map(|i| (synth::clip_id(i), synth::clip_split(i, n), synth::clip_label(i)))
        .collect();
    let labels_path = out.join("labels.csv");
    crate::dataio::write_labels(&labels, &labels_path)?;
    report.record_output(&labels_path);

    // Facetubes.
    let tubes_dir = out.join("facetubes");
    std::fs::create_dir_all(&tubes_dir)?;
    for (i, (clip, _, _)) in labels.iter().enumerate() {
        let tube = synth::jittery_tube(derive_seed(seed, 10_000 + i as u64), 24);
        let path = tubes_dir.join(format!("{clip}.csv"));
        stage_file(&path, |tmp| write_facetube(&tube, tmp))?;
    }
    report.record_output(&tubes_dir);

    // Per-frame probabilities (variable length, both expansion and
    // contraction cases).
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let frame_probs_path = out.join("frame_probs.csv");
    {
        let mut text = String::from(emofuse::aggregate::FRAME_PROB_HEADER);
        text.push('\n');
        for (clip, _, gold) in &labels {
            let t = rng.random_range(4..=30);
            for (f, row) in synth::frame_probability_rows(*gold, t, &mut rng)
                .iter()
                .enumerate()
            {
                text.push_str(&format!("{clip},{f}"));
                for &p in row.scores() {
                    text.push_str(&format!(",{p:.8e}"));
                }
                text.push('\n');
            }
        }
        write_atomic(&frame_probs_path, text.as_bytes())?;
    }
    report.record_output(&frame_probs_path);

    // Audio feature matrices.
    let features_dir = out.join("features");
    std::fs::create_dir_all(&features_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    for (clip, _, gold) in &labels {
        let d_t = rng.random_range(4..=10);
        let m = synth::audio_feature_matrix(*gold, d_t, sizes.audio_dim, &mut rng);
        emofuse::container::write_feature_matrix(&features_dir, clip, &m)?;
    }
    report.record_output(&features_dir);

    // Face frames (mouth pipeline input).
    let faces_dir = out.join("faces");
    std::fs::create_dir_all(&faces_dir)?;
    for (clip_id, frames, _) in synth::mouth_faces(derive_seed(seed, 3), n, sizes.face_frames) {
        for (f, img) in frames.iter().enumerate() {
            let path = faces_dir.join(format!("{clip_id}_{f}.pgm"));
            stage_file(&path, |tmp| write_pgm(img, tmp))?;
        }
    }
    report.record_output(&faces_dir);

    // Motion videos.
    let videos_dir = out.join("videos");
    std::fs::create_dir_all(&videos_dir)?;
    for (clip_id, frames, _) in synth::motion_videos(
        derive_seed(seed, 4),
        n,
        sizes.video_frames,
        sizes.video_size,
        sizes.video_size,
    ) {
        for (f, img) in frames.iter().enumerate() {
            let path = videos_dir.join(format!("{clip_id}_{f}.pgm"));
            stage_file(&path, |tmp| write_pgm(img, tmp))?;
        }
    }
    report.record_output(&videos_dir);

    // Complementary expert predictions plus cross-fitted (swapped) files.
    let experts_dir = out.join("experts");
    std::fs::create_dir_all(&experts_dir)?;
    let bundle = synth::complementary_bundle(derive_seed(seed, 5), n);
    let swapped = synth::complementary_bundle(derive_seed(seed, 6), n);
    let mut expert_entries = Vec::new();
    for (mi, model) in bundle.models().iter().enumerate() {
        let pred_path = experts_dir.join(format!("{model}.csv"));
        let sets: Vec<_> = bundle
            .available_splits()
            .into_iter()
            .map(|s| bundle.split_sets(s).expect("split exists")[mi].clone())
            .collect();
        stage_file(&pred_path, |tmp| write_prediction_sets(&sets, tmp))?;

        let swapped_path = experts_dir.join(format!("{model}_swapped.csv"));
        let swapped_sets: Vec<_> = [Split::Train, Split::Valid]
            .into_iter()
            .map(|s| swapped.split_sets(s).expect("split exists")[mi].clone())
            .collect();
        stage_file(&swapped_path, |tmp| write_prediction_sets(&swapped_sets, tmp))?;
        expert_entries.push(serde_json::json!({
            "id": model,
            "predictions": format!("experts/{model}.csv"),
            "swapped": format!("experts/{model}_swapped.csv"),
        }));
    }
    report.record_output(&experts_dir);

    // Ready-to-run config pointing at the tree.
    // Paths are relative to the config file, which sits in the fixture
    // root, so the tree can be moved or renamed freely.
    let config_json = serde_json::json!({
        "seed": seed,
        "preset": cfg.preset.name(),
        "data": {
            "facetubes": "facetubes",
            "frame_probs": "frame_probs.csv",
            "labels": "labels.csv",
            "features": "features",
            "faces": "faces",
            "videos": "videos",
            "descriptors": "descriptors.csv",
            "experts": expert_entries,
            "predictions": "fused.csv",
        }
    });
    let config_path = out.join("config.json");
    write_atomic(
        &config_path,
        serde_json::to_string_pretty(&config_json)?.as_bytes(),
    )?;
    report.record_output(&config_path);

    report.details = serde_json::json!({
        "clips": n,
        "face_frames": sizes.face_frames,
        "video_frames": sizes.video_frames,
        "audio_dim": sizes.audio_dim,
    });
    report.wall_time_ms = started.elapsed().as_millis();
    report.write(out)
}
