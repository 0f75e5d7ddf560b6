//! `fuse`: combine expert prediction files with the selected strategy.

use std::time::Instant;

use emofuse::emotions::{
    read_prediction_sets, write_prediction_sets, ClassDistribution, PredictionEntry,
    PredictionSet, Split,
};
use emofuse::error::{Error, Result};
use emofuse::fusion::{
    bag_weighted_averages, build_swapped_predictions, enumerate_subset_averages, mean_of_subset,
    random_search, scaling_search, svm_stack_train, weighted_average, write_weights_json,
    ExpertBundle, SearchConfig, StackConfig, WeightMatrix,
};
use emofuse::NUM_CLASSES;

use crate::config::ResolvedConfig;
use crate::report::{stage_file, RunReport};
use crate::FuseStrategy;

fn load_bundle(cfg: &ResolvedConfig) -> Result<ExpertBundle> {
    if cfg.data.experts.is_empty() {
        return Err(Error::Config("config data.experts is required".into()));
    }
    let mut models = Vec::new();
    let mut per_model = Vec::new();
    for e in &cfg.data.experts {
        if !e.predictions.exists() {
            return Err(Error::Config(format!(
                "expert `{}` predictions `{}` do not exist",
                e.id,
                e.predictions.display()
            )));
        }
        models.push(e.id.clone());
        per_model.push(read_prediction_sets(&e.predictions)?);
    }
    ExpertBundle::new(models, per_model)
}

fn load_swapped_bundle(cfg: &ResolvedConfig) -> Result<ExpertBundle> {
    let mut models = Vec::new();
    let mut per_model = Vec::new();
    for e in &cfg.data.experts {
        let path = e.swapped.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "expert `{}` needs a `swapped` prediction file for this strategy",
                e.id
            ))
        })?;
        models.push(e.id.clone());
        per_model.push(read_prediction_sets(path)?);
    }
    let bundle = ExpertBundle::new(models, per_model)?;
    build_swapped_predictions(&bundle, &bundle)
}

/// Normalizes fused raw scores for serialization (argmax is unchanged).
fn normalized_set(set: &PredictionSet) -> Result<PredictionSet> {
    let entries = set
        .entries()
        .iter()
        .map(|e| -> Result<PredictionEntry> {
            Ok(PredictionEntry {
                clip_id: e.clip_id.clone(),
                dist: e.dist.renormalized()?,
                gold: e.gold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(set.split(), entries)
}

/// Applies a weight matrix to every split of the bundle.
fn fuse_all_splits(bundle: &ExpertBundle, w: &WeightMatrix) -> Result<Vec<PredictionSet>> {
    bundle
        .available_splits()
        .into_iter()
        .map(|split| weighted_average(bundle.split_sets(split)?, w))
        .collect()
}

/// Mean of per-bag fused scores for one split.
fn bagged_split(
    bundle: &ExpertBundle,
    weights: &[WeightMatrix],
    split: Split,
) -> Result<PredictionSet> {
    let sets = bundle.split_sets(split)?;
    let fused: Vec<PredictionSet> = weights
        .iter()
        .map(|w| weighted_average(sets, w))
        .collect::<Result<Vec<_>>>()?;
    let n = fused[0].len();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let mut scores = [0.0; NUM_CLASSES];
        for f in &fused {
            for c in 0..NUM_CLASSES {
                scores[c] += f.entries()[i].dist.scores()[c];
            }
        }
        for s in &mut scores {
            *s /= fused.len() as f64;
        }
        entries.push(PredictionEntry {
            clip_id: fused[0].entries()[i].clip_id.clone(),
            dist: ClassDistribution::unnormalized(scores)?,
            gold: fused[0].entries()[i].gold,
        });
    }
    PredictionSet::new(split, entries)
}

pub fn run(cfg: &ResolvedConfig, strategy: FuseStrategy, started: Instant) -> Result<()> {
    let bundle = load_bundle(cfg)?;
    let m = bundle.n_models();
    let search_cfg = SearchConfig {
        coarse_samples: cfg.fusion.coarse_samples,
        local_samples: cfg.fusion.local_samples,
        local_sigma: cfg.fusion.local_sigma,
        rounding_decimals: 2,
        seed: cfg.seed,
        objective_split: cfg.fusion.objective_split,
    };

    let command = format!("fuse:{strategy:?}").to_lowercase();
    let mut report = RunReport::new(&command, cfg.hash(&command), cfg.seed, cfg.preset.name());
    let mut weights_to_write: Option<WeightMatrix> = None;

    let fused_sets: Vec<PredictionSet> = match strategy {
        FuseStrategy::Mean => {
            let w = WeightMatrix::uniform(m);
            weights_to_write = Some(w.clone());
            report.details = serde_json::json!({ "strategy": "mean", "models": bundle.models() });
            fuse_all_splits(&bundle, &w)?
        }
        FuseStrategy::SubsetMean => {
            let ranked = enumerate_subset_averages(&bundle, cfg.fusion.objective_split)?;
            let best = ranked[0].0.clone();
            let ranked_json: Vec<serde_json::Value> = ranked
                .iter()
                .map(|(subset, acc)| {
                    serde_json::json!({
                        "subset": subset.iter().map(|&i| bundle.models()[i].clone()).collect::<Vec<_>>(),
                        "accuracy": acc,
                    })
                })
                .collect();
            report.details = serde_json::json!({
                "strategy": "subset-mean",
                "evaluated_subsets": ranked.len(),
                "ranking": ranked_json,
            });
            // The best subset's mean, expressed as a weight matrix.
            let mut w = ndarray::Array2::zeros((NUM_CLASSES, m));
            for c in 0..NUM_CLASSES {
                for &mi in &best {
                    w[(c, mi)] = 1.0 / best.len() as f64;
                }
            }
            weights_to_write = Some(WeightMatrix::new(w)?);
            bundle
                .available_splits()
                .into_iter()
                .map(|split| mean_of_subset(bundle.split_sets(split)?, &best))
                .collect::<Result<Vec<_>>>()?
        }
        FuseStrategy::Search => {
            let (w, acc) = random_search(&bundle, &search_cfg)?;
            report.details = serde_json::json!({
                "strategy": "search",
                "objective_split": cfg.fusion.objective_split.name(),
                "objective_accuracy": acc,
                "coarse_samples": cfg.fusion.coarse_samples,
                "local_samples": cfg.fusion.local_samples,
            });
            weights_to_write = Some(w.clone());
            fuse_all_splits(&bundle, &w)?
        }
        FuseStrategy::SearchSwapped => {
            let swapped = load_swapped_bundle(cfg)?;
            let swapped_cfg = SearchConfig {
                objective_split: Split::Other,
                ..search_cfg.clone()
            };
            let (w, acc) = random_search(&swapped, &swapped_cfg)?;
            report.details = serde_json::json!({
                "strategy": "search-swapped",
                "objective_accuracy_on_swapped": acc,
            });
            weights_to_write = Some(w.clone());
            fuse_all_splits(&bundle, &w)?
        }
        FuseStrategy::Bag => {
            let (_, weights) = bag_weighted_averages(
                &bundle,
                &search_cfg,
                cfg.fusion.n_bags,
                cfg.fusion.apply_split,
            )?;
            report.details = serde_json::json!({
                "strategy": "bag",
                "n_bags": cfg.fusion.n_bags,
            });
            let sets = bundle
                .available_splits()
                .into_iter()
                .map(|split| bagged_split(&bundle, &weights, split))
                .collect::<Result<Vec<_>>>()?;
            // The mean of the bag weight matrices summarizes the ensemble.
            let mut mean_w = ndarray::Array2::zeros((NUM_CLASSES, m));
            for w in &weights {
                mean_w += w.matrix();
            }
            mean_w /= weights.len() as f64;
            weights_to_write = Some(WeightMatrix::new(mean_w)?);
            sets
        }
        FuseStrategy::SvmStack => {
            let stack_cfg = StackConfig {
                plan: super::train_expert::svm_plan(&cfg.svm),
                train_split: Split::Train,
                valid_split: cfg.fusion.objective_split,
            };
            let scaling = if cfg.fusion.scaling_budget > 0 {
                let (s, acc) =
                    scaling_search(&bundle, &stack_cfg, cfg.fusion.scaling_budget, cfg.seed)?;
                report.details = serde_json::json!({
                    "strategy": "svm-stack",
                    "scaling_budget": cfg.fusion.scaling_budget,
                    "scaling_accuracy": acc,
                    "scaling_factors": s.factors,
                });
                Some(s)
            } else {
                None
            };
            let model = svm_stack_train(&bundle, scaling, &stack_cfg)?;
            if report.details.is_null() {
                report.details = serde_json::json!({
                    "strategy": "svm-stack",
                    "gamma": model.kernel().gamma,
                    "c": model.kernel().c,
                });
            }
            bundle
                .available_splits()
                .into_iter()
                .map(|split| model.predict_split(&bundle, split))
                .collect::<Result<Vec<_>>>()?
        }
    };

    // Serialized predictions are normalized; argmax is scale-invariant.
    let normalized: Vec<PredictionSet> = fused_sets
        .iter()
        .map(normalized_set)
        .collect::<Result<Vec<_>>>()?;
    let out_path = cfg.out.join("fused.csv");
    stage_file(&out_path, |tmp| write_prediction_sets(&normalized, tmp))?;
    report.record_output(&out_path);
    if let Some(w) = &weights_to_write {
        let weights_path = cfg.out.join("weights.json");
        stage_file(&weights_path, |tmp| {
            write_weights_json(tmp, bundle.models(), w)
        })?;
        report.record_output(&weights_path);
    }
    super::record_split_metrics(&mut report, &cfg.out, &normalized)?;
    report.wall_time_ms = started.elapsed().as_millis();
    report.write(&cfg.out)
}
