pub mod aggregate;
pub mod eval;
pub mod fuse;
pub mod gen_synth;
pub mod smooth_tubes;
pub mod train_expert;

use std::path::Path;

use emofuse::emotions::{accuracy, PredictionSet};
use emofuse::error::Result;

use crate::report::{write_confusion_csv, RunReport};

/// Records accuracy and a confusion CSV for every set that has gold labels.
pub fn record_split_metrics(
    report: &mut RunReport,
    out_dir: &Path,
    sets: &[PredictionSet],
) -> Result<()> {
    for set in sets {
        if set.is_empty() || set.entries().iter().any(|e| e.gold.is_none()) {
            continue;
        }
        let acc = accuracy(set)?;
        report
            .per_split_accuracy
            .insert(set.split().name().to_string(), acc);
        let path = out_dir.join(format!("confusion_{}.csv", set.split()));
        write_confusion_csv(set, &path)?;
        report
            .confusion_files
            .insert(set.split().name().to_string(), path.display().to_string());
    }
    Ok(())
}
