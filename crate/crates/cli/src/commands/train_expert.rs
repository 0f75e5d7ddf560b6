//! `train-expert`: train one modality expert and emit model files plus
//! prediction CSVs for every split present in the labels file.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use emofuse::audio::{train_audio_expert, AudioClip, AudioExpertConfig, FeatureSequence};
use emofuse::bof::motion::{train_motion_expert, MotionBowConfig, Video};
use emofuse::bof::{bag_of_mouth_train, BagOfMouthConfig};
use emofuse::classifiers::{svm_grid_search, svm_train, GridSearchPlan, LabeledDataset};
use emofuse::emotions::{
    write_prediction_sets, ClassDistribution, EmotionLabel, PredictionEntry, PredictionSet,
    Split,
};
use emofuse::error::{Error, Result};
use emofuse::image::GrayImage;
use emofuse::kernels::KernelKind;

use crate::config::{ResolvedConfig, SvmParams};
use crate::dataio::read_labels;
use crate::report::{stage_file, RunReport};
use crate::ExpertKind;

pub fn svm_plan(params: &SvmParams) -> GridSearchPlan {
    let mut plan = GridSearchPlan::coarse_only((params.coarse_lo..=params.coarse_hi).collect());
    if params.fine {
        plan.fine_exponents = GridSearchPlan::default().fine_exponents;
    }
    plan
}

type Labels = BTreeMap<String, (Split, EmotionLabel)>;

fn label_for<'a>(labels: &'a Labels, clip: &str) -> Result<&'a (Split, EmotionLabel)> {
    labels
        .get(clip)
        .ok_or_else(|| Error::Config(format!("clip `{clip}` has no row in the labels file")))
}

/// Builds per-split prediction sets from per-clip distributions, ordered by
/// clip id.
fn sets_from_predictions(
    preds: BTreeMap<String, ClassDistribution>,
    labels: &Labels,
) -> Result<Vec<PredictionSet>> {
    let mut by_split: BTreeMap<Split, Vec<PredictionEntry>> = BTreeMap::new();
    for (clip, dist) in preds {
        let (split, gold) = *label_for(labels, &clip)?;
        by_split.entry(split).or_default().push(PredictionEntry {
            clip_id: clip,
            dist,
            gold: Some(gold),
        });
    }
    by_split
        .into_iter()
        .map(|(split, entries)| PredictionSet::new(split, entries))
        .collect()
}

fn train_audio(cfg: &ResolvedConfig, labels: &Labels) -> Result<(Vec<PredictionSet>, serde_json::Value)> {
    let dir = cfg.require(&cfg.data.features, "features")?;
    let matrices = emofuse::container::read_feature_dir(dir)?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut all: Vec<FeatureSequence> = Vec::new();
    for (clip, m) in matrices {
        let (split, gold) = *label_for(labels, &clip)?;
        let seq = FeatureSequence::new(clip, m)?;
        all.push(seq.clone());
        let clip = AudioClip { seq, label: gold };
        match split {
            Split::Train => train.push(clip),
            Split::Valid => valid.push(clip),
            _ => {}
        }
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config(
            "audio training needs clips labeled train and valid".into(),
        ));
    }
    let d_f = train[0].seq.features.ncols();
    let mut expert_cfg = AudioExpertConfig::with_sizes(d_f, cfg.audio.hidden);
    for layer in &mut expert_cfg.rbm_layers {
        layer.epochs = cfg.audio.rbm_epochs;
        layer.learning_rate *= cfg.audio.rbm_learning_rate_scale;
    }
    expert_cfg.finetune.iterations = cfg.audio.iterations;
    expert_cfg.finetune.optimizer.step_size = cfg.audio.step_size;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (expert, log) = train_audio_expert(&expert_cfg, &train, &valid, &mut rng)?;
    expert.save(&cfg.out.join("model_audio"))?;

    let mut preds = BTreeMap::new();
    for seq in &all {
        preds.insert(seq.clip_id.clone(), expert.predict(seq)?);
    }
    let details = serde_json::json!({
        "expert": "audio",
        "best_iteration": log.best_iteration,
        "best_valid_accuracy": log.best_valid_accuracy,
        "max_unit_norm_seen": log.max_unit_norm_seen,
    });
    Ok((sets_from_predictions(preds, labels)?, details))
}

fn train_mouth(cfg: &ResolvedConfig, labels: &Labels) -> Result<(Vec<PredictionSet>, serde_json::Value)> {
    let dir = cfg.require(&cfg.data.faces, "faces")?;
    let clips = crate::dataio::read_frame_dir(dir)?;
    let mut train_frames: Vec<(GrayImage, EmotionLabel)> = Vec::new();
    for (clip, frames) in &clips {
        let (split, gold) = *label_for(labels, clip)?;
        if split == Split::Train {
            train_frames.extend(frames.iter().map(|(_, f)| (f.clone(), gold)));
        }
    }
    if train_frames.is_empty() {
        return Err(Error::Config("no face frames labeled train".into()));
    }
    let mouth_cfg = BagOfMouthConfig {
        codebook_size: cfg.mouth.codebook_size,
        fit_patches_per_region: cfg.mouth.fit_patches_per_region,
        seed: cfg.seed,
        ..BagOfMouthConfig::default()
    };
    let model = bag_of_mouth_train(&train_frames, &mouth_cfg)?;
    model.save(&cfg.out.join("model_mouth"))?;

    let mut preds = BTreeMap::new();
    for (clip, frames) in &clips {
        let images: Vec<GrayImage> = frames.iter().map(|(_, f)| f.clone()).collect();
        preds.insert(clip.clone(), model.predict_video(&images)?);
    }
    let details = serde_json::json!({
        "expert": "mouth",
        "codebook_size": cfg.mouth.codebook_size,
        "training_frames": train_frames.len(),
    });
    Ok((sets_from_predictions(preds, labels)?, details))
}

fn train_motion(
    cfg: &ResolvedConfig,
    labels: &Labels,
    plan: &GridSearchPlan,
) -> Result<(Vec<PredictionSet>, serde_json::Value)> {
    let dir = cfg.require(&cfg.data.videos, "videos")?;
    let clips = crate::dataio::read_frame_dir(dir)?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut all: Vec<(String, Video)> = Vec::new();
    for (clip, frames) in clips {
        let (split, gold) = *label_for(labels, &clip)?;
        let video = Video::new(frames.into_iter().map(|(_, f)| f).collect())?;
        all.push((clip.clone(), video.clone()));
        match split {
            Split::Train => train.push((clip, video, gold)),
            Split::Valid => valid.push((clip, video, gold)),
            _ => {}
        }
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config(
            "motion training needs clips labeled train and valid".into(),
        ));
    }
    let motion_cfg = MotionBowConfig {
        n_blocks: cfg.motion.n_blocks,
        block_pca: cfg.motion.block_pca,
        descriptor_pca: cfg.motion.descriptor_pca,
        words: cfg.motion.words,
        encoder: emofuse::bof::motion::EncoderTrainConfig {
            hidden: cfg.motion.block_pca,
            epochs: cfg.motion.encoder_epochs,
            ..emofuse::bof::motion::EncoderTrainConfig::default()
        },
        svm_plan: plan.clone(),
        seed: cfg.seed,
    };
    let expert = train_motion_expert(&train, &valid, &motion_cfg)?;
    expert.save(&cfg.out.join("model_motion"))?;

    let mut preds = BTreeMap::new();
    let mut histograms = Vec::with_capacity(all.len());
    for (clip, video) in &all {
        let hist = expert.histogram(video)?;
        preds.insert(clip.clone(), expert.svm.predict_proba(&hist)?);
        histograms.push((clip.clone(), hist));
    }
    let hist_path = cfg.out.join("histograms_motion.csv");
    stage_file(&hist_path, |tmp| {
        emofuse::bof::motion::write_histograms(&histograms, tmp)
    })?;
    let details = serde_json::json!({
        "expert": "motion",
        "words": cfg.motion.words,
        "n_blocks": cfg.motion.n_blocks,
        "svm_gamma": expert.svm.kernel().gamma,
        "svm_c": expert.svm.kernel().c,
    });
    Ok((sets_from_predictions(preds, labels)?, details))
}

fn train_desc_svm(
    cfg: &ResolvedConfig,
    labels: &Labels,
    plan: &GridSearchPlan,
) -> Result<(Vec<PredictionSet>, serde_json::Value)> {
    let path = cfg.require(&cfg.data.descriptors, "descriptors")?;
    let rows = emofuse::aggregate::read_descriptors(path)?;
    let mut split_rows: BTreeMap<Split, Vec<(String, Vec<f64>, EmotionLabel)>> = BTreeMap::new();
    for (clip, d) in rows {
        let (split, gold) = *label_for(labels, &clip)?;
        split_rows
            .entry(split)
            .or_default()
            .push((clip, d.values().to_vec(), gold));
    }
    let dataset = |rows: &[(String, Vec<f64>, EmotionLabel)]| -> Result<LabeledDataset> {
        let n = rows.len();
        let d = rows[0].1.len();
        let mut x = Array2::zeros((n, d));
        let mut y = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for (i, (clip, v, gold)) in rows.iter().enumerate() {
            for (j, &val) in v.iter().enumerate() {
                x[(i, j)] = val;
            }
            y.push(*gold);
            ids.push(clip.clone());
        }
        LabeledDataset::with_ids(x, y, ids)
    };
    let train_rows = split_rows
        .get(&Split::Train)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Config("no descriptors labeled train".into()))?;
    let valid_rows = split_rows
        .get(&Split::Valid)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Config("no descriptors labeled valid".into()))?;
    let train_data = dataset(train_rows)?;
    let valid_data = dataset(valid_rows)?;
    let search = svm_grid_search(plan, KernelKind::Rbf, &train_data, &valid_data)?;
    let model = svm_train(&train_data, &search.config)?;
    model.save(&cfg.out.join("model_svm"))?;

    let mut preds = BTreeMap::new();
    for rows in split_rows.values() {
        for (clip, v, _) in rows {
            preds.insert(clip.clone(), model.predict_proba(v)?);
        }
    }
    let details = serde_json::json!({
        "expert": "svm-on-descriptors",
        "gamma": search.config.gamma,
        "c": search.config.c,
        "grid_evaluations": search.evaluations,
        "valid_accuracy_at_selection": search.accuracy,
    });
    Ok((sets_from_predictions(preds, labels)?, details))
}

pub fn run(cfg: &ResolvedConfig, expert: ExpertKind, started: Instant) -> Result<()> {
    let labels = read_labels(cfg.require(&cfg.data.labels, "labels")?)?;
    let plan = svm_plan(&cfg.svm);
    let (sets, details, name) = match expert {
        ExpertKind::Audio => {
            let (s, d) = train_audio(cfg, &labels)?;
            (s, d, "audio")
        }
        ExpertKind::Mouth => {
            let (s, d) = train_mouth(cfg, &labels)?;
            (s, d, "mouth")
        }
        ExpertKind::Motion => {
            let (s, d) = train_motion(cfg, &labels, &plan)?;
            (s, d, "motion")
        }
        ExpertKind::SvmOnDescriptors => {
            let (s, d) = train_desc_svm(cfg, &labels, &plan)?;
            (s, d, "svm")
        }
    };
    let command = format!("train-expert:{name}");
    let mut report = RunReport::new(&command, cfg.hash(&command), cfg.seed, cfg.preset.name());
    let out_path = cfg.out.join(format!("predictions_{name}.csv"));
    stage_file(&out_path, |tmp| write_prediction_sets(&sets, tmp))?;
    report.record_output(&out_path);
    super::record_split_metrics(&mut report, &cfg.out, &sets)?;
    report.details = details;
    report.wall_time_ms = started.elapsed().as_millis();
    report.write(&cfg.out)
}
