//! Run reports and shared output helpers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use emofuse::emotions::{confusion, PredictionSet};
use emofuse::error::Result;
use emofuse::NUM_CLASSES;

/// Written as `report.json` next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub preset: String,
    /// Accuracy per split where gold labels were available.
    pub per_split_accuracy: BTreeMap<String, f64>,
    /// Confusion CSV files per split.
    pub confusion_files: BTreeMap<String, String>,
    /// Data files produced by the command.
    pub outputs: Vec<String>,
    /// Strategy- or expert-specific details.
    pub details: serde_json::Value,
    pub wall_time_ms: u128,
}

impl RunReport {
    pub fn new(command: &str, config_hash: String, seed: u64, preset: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            preset: preset.to_string(),
            per_split_accuracy: BTreeMap::new(),
            confusion_files: BTreeMap::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
            wall_time_ms: 0,
        }
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
        self.outputs.sort();
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("report.json");
        write_atomic(&path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Writes via a temporary file and rename so no truncated final file can
/// exist.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs a writer callback against a temporary path, then renames into
/// place.
pub fn stage_file(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    let tmp = tmp_path(path);
    write(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".tmp");
    path.with_file_name(name)
}

/// Confusion CSV: header row of predicted labels, one row per gold label
/// with raw counts.
pub fn write_confusion_csv(set: &PredictionSet, path: &Path) -> Result<()> {
    let cm = confusion(set)?;
    let mut text = String::from("gold\\pred");
    for l in emofuse::emotions::EmotionLabel::ALL {
        text.push(',');
        text.push_str(l.name());
    }
    text.push('\n');
    for g in 0..NUM_CLASSES {
        text.push_str(emofuse::emotions::EmotionLabel::ALL[g].name());
        for p in 0..NUM_CLASSES {
            text.push_str(&format!(",{}", cm.counts[g][p]));
        }
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}
