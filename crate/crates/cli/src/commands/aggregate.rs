//! `aggregate`: per-frame probability CSV into 70-dim video descriptors.

use std::time::Instant;

use emofuse::aggregate::{build_descriptor, read_frame_probabilities, write_descriptors};
use emofuse::error::Result;

use crate::config::ResolvedConfig;
use crate::report::{stage_file, RunReport};

pub fn run(cfg: &ResolvedConfig, started: Instant) -> Result<()> {
    let input = cfg.require(&cfg.data.frame_probs, "frame_probs")?;
    let sequences = read_frame_probabilities(input)?;
    let mut rows = Vec::with_capacity(sequences.len());
    for seq in &sequences {
        rows.push((seq.clip_id.clone(), build_descriptor(seq)?));
    }
    let out_path = cfg.out.join("descriptors.csv");
    stage_file(&out_path, |tmp| write_descriptors(&rows, tmp))?;

    let mut report = RunReport::new("aggregate", cfg.hash("aggregate"), cfg.seed, cfg.preset.name());
    report.record_output(&out_path);
    report.details = serde_json::json!({ "clips": rows.len() });
    report.wall_time_ms = started.elapsed().as_millis();
    report.write(&cfg.out)
}
