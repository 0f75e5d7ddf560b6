//! `smooth-tubes`: apply the full facetube smoothing chain to every tube
//! CSV in the input directory.

use std::time::Instant;

use emofuse::error::{Error, Result};
use emofuse::facetube::{read_facetube, smooth_facetube, write_facetube, SmoothingConfig};

use crate::config::ResolvedConfig;
use crate::report::{stage_file, RunReport};

pub fn run(cfg: &ResolvedConfig, window_override: Option<usize>, started: Instant) -> Result<()> {
    let dir = cfg.require(&cfg.data.facetubes, "facetubes")?;
    let smoothing = SmoothingConfig {
        window: window_override.unwrap_or(cfg.facetube.window),
        slope_threshold: cfg.facetube.slope_threshold,
        output_size: cfg.facetube.output_size,
    };
    smoothing.validate()?;

    let out_dir = cfg.out.join("tubes");
    std::fs::create_dir_all(&out_dir)?;
    let mut report = RunReport::new("smooth-tubes", cfg.hash("smooth-tubes"), cfg.seed, cfg.preset.name());

    let mut inputs: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |e| e == "csv"))
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no facetube CSVs in {}",
            dir.display()
        )));
    }
    for input in inputs {
        let tube = read_facetube(&input)?;
        let smoothed = smooth_facetube(&tube, &smoothing)?;
        let name = input.file_name().expect("file name");
        let out_path = out_dir.join(name);
        stage_file(&out_path, |tmp| write_facetube(&smoothed, tmp))?;
        report.record_output(&out_path);
    }
    report.wall_time_ms = started.elapsed().as_millis();
    report.write(&cfg.out)
}
