//! `eval`: accuracy and confusion matrices for a prediction file.

use std::path::Path;
use std::time::Instant;

use emofuse::emotions::{read_prediction_sets, PredictionEntry, PredictionSet};
use emofuse::error::{Error, Result};

use crate::config::ResolvedConfig;
use crate::dataio::read_labels;
use crate::report::RunReport;

pub fn run(
    cfg: &ResolvedConfig,
    predictions_flag: Option<&Path>,
    gold_flag: Option<&Path>,
    started: Instant,
) -> Result<()> {
    let predictions_path = match predictions_flag {
        Some(p) => p.to_path_buf(),
        None => cfg
            .require(&cfg.data.predictions, "predictions")?
            .to_path_buf(),
    };
    if !predictions_path.exists() {
        return Err(Error::Config(format!(
            "prediction file `{}` does not exist",
            predictions_path.display()
        )));
    }
    let mut sets = read_prediction_sets(&predictions_path)?;

    // Gold labels come from the labels file when given, otherwise from the
    // prediction file itself.
    let labels_path = gold_flag
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.data.labels.clone());
    if let Some(path) = labels_path {
        let labels = read_labels(&path)?;
        sets = sets
            .iter()
            .map(|set| -> Result<PredictionSet> {
                let mut expected: Vec<&String> = labels
                    .iter()
                    .filter(|(_, (split, _))| *split == set.split())
                    .map(|(clip, _)| clip)
                    .collect();
                expected.sort();
                if expected.len() != set.len() {
                    return Err(Error::Config(format!(
                        "split {}: predictions cover {} clips but labels list {}",
                        set.split(),
                        set.len(),
                        expected.len()
                    )));
                }
                let entries = set
                    .entries()
                    .iter()
                    .map(|e| -> Result<PredictionEntry> {
                        let (split, gold) = labels.get(&e.clip_id).ok_or_else(|| {
                            Error::Config(format!(
                                "clip `{}` missing from the labels file",
                                e.clip_id
                            ))
                        })?;
                        if *split != set.split() {
                            return Err(Error::Config(format!(
                                "clip `{}` labeled split {split} but predicted as {}",
                                e.clip_id,
                                set.split()
                            )));
                        }
                        Ok(PredictionEntry {
                            clip_id: e.clip_id.clone(),
                            dist: e.dist.clone(),
                            gold: Some(*gold),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                PredictionSet::new(set.split(), entries)
            })
            .collect::<Result<Vec<_>>>()?;
    }
    for set in &sets {
        if let Some(missing) = set.entries().iter().find(|e| e.gold.is_none()) {
            return Err(Error::MissingGold(missing.clip_id.clone()));
        }
    }

    let mut report = RunReport::new("eval", cfg.hash("eval"), cfg.seed, cfg.preset.name());
    super::record_split_metrics(&mut report, &cfg.out, &sets)?;
    report.details = serde_json::json!({
        "predictions": predictions_path.display().to_string(),
        "clips": sets.iter().map(|s| s.len()).sum::<usize>(),
    });
    report.wall_time_ms = started.elapsed().as_millis();
    report.write(&cfg.out)
}
