//! Acceptance criterion 11: every CLI command rerun with identical config
//! and seed produces byte-identical data outputs, independent of
//! `--threads`. Reports are compared as JSON with the wall time ignored.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_emofuse")
}

fn run(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(binary())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], cwd: &Path) {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn collect_files(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    files
}

/// Byte-compares two output trees; `report.json` is compared as JSON with
/// `wall_time_ms` masked out (wall time legitimately differs).
fn assert_identical_outputs(a: &Path, b: &Path, context: &str) {
    let fa = collect_files(a);
    let fb = collect_files(b);
    let rel = |files: &[PathBuf], root: &Path| -> Vec<PathBuf> {
        files
            .iter()
            .map(|f| f.strip_prefix(root).expect("under root").to_path_buf())
            .collect()
    };
    assert_eq!(rel(&fa, a), rel(&fb, b), "{context}: differing file sets");
    for (pa, pb) in fa.iter().zip(&fb) {
        let bytes_a = std::fs::read(pa).expect("readable");
        let bytes_b = std::fs::read(pb).expect("readable");
        if pa.file_name().map_or(false, |n| n == "report.json") {
            let mut ja: serde_json::Value = serde_json::from_slice(&bytes_a).expect("json");
            let mut jb: serde_json::Value = serde_json::from_slice(&bytes_b).expect("json");
            for j in [&mut ja, &mut jb] {
                j.as_object_mut()
                    .expect("object")
                    .insert("wall_time_ms".into(), serde_json::Value::Null);
                // Output paths embed the run directory name; compare their
                // file names only.
                if let Some(outputs) = j.get_mut("outputs").and_then(|o| o.as_array_mut()) {
                    for o in outputs {
                        let name = PathBuf::from(o.as_str().unwrap_or_default())
                            .file_name()
                            .map(|n| n.to_string_lossy().into_owned())
                            .unwrap_or_default();
                        *o = serde_json::Value::String(name);
                    }
                }
                if let Some(conf) = j.get_mut("confusion_files").and_then(|o| o.as_object_mut()) {
                    for (_, v) in conf.iter_mut() {
                        let name = PathBuf::from(v.as_str().unwrap_or_default())
                            .file_name()
                            .map(|n| n.to_string_lossy().into_owned())
                            .unwrap_or_default();
                        *v = serde_json::Value::String(name);
                    }
                }
                if let Some(details) = j.get_mut("details").and_then(|o| o.as_object_mut()) {
                    details.remove("predictions");
                }
            }
            assert_eq!(ja, jb, "{context}: {} differs", pa.display());
        } else {
            assert_eq!(
                bytes_a,
                bytes_b,
                "{context}: {} differs from {}",
                pa.display(),
                pb.display()
            );
        }
    }
}

/// Runs one command twice (the second run with a different thread cap) and
/// checks the outputs byte for byte.
fn check_command(name: &str, base_args: &[&str], cwd: &Path) {
    let out_a = format!("{name}_a");
    let out_b = format!("{name}_b");
    let mut args_a: Vec<&str> = base_args.to_vec();
    args_a.extend(["--out", &out_a]);
    let mut args_b: Vec<&str> = base_args.to_vec();
    args_b.extend(["--out", &out_b, "--threads", "2"]);
    run_ok(&args_a, cwd);
    run_ok(&args_b, cwd);
    assert_identical_outputs(&cwd.join(&out_a), &cwd.join(&out_b), name);
    println!("[PASS] criterion 11 ({name}): byte-identical outputs, thread-count independent");
}

#[test]
fn criterion_11_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();

    // Fixtures (gen-synth is itself checked for determinism).
    check_command(
        "gen",
        &[
            "gen-synth",
            "--seed",
            "11",
            "--clips",
            "42",
            "--face-frames",
            "2",
            "--video-frames",
            "16",
            "--video-size",
            "26",
        ],
        cwd,
    );
    let fix = "gen_a";

    // Config shared by the remaining commands; small enough to run each
    // step in seconds.
    let config = serde_json::json!({
        "seed": 11,
        "data": {
            "facetubes": format!("{fix}/facetubes"),
            "frame_probs": format!("{fix}/frame_probs.csv"),
            "labels": format!("{fix}/labels.csv"),
            "features": format!("{fix}/features"),
            "faces": format!("{fix}/faces"),
            "videos": format!("{fix}/videos"),
            "descriptors": "prep_desc/descriptors.csv",
            "experts": [
                {"id": "expert0", "predictions": format!("{fix}/experts/expert0.csv"), "swapped": format!("{fix}/experts/expert0_swapped.csv")},
                {"id": "expert1", "predictions": format!("{fix}/experts/expert1.csv"), "swapped": format!("{fix}/experts/expert1_swapped.csv")},
                {"id": "expert2", "predictions": format!("{fix}/experts/expert2.csv"), "swapped": format!("{fix}/experts/expert2_swapped.csv")},
                {"id": "expert3", "predictions": format!("{fix}/experts/expert3.csv"), "swapped": format!("{fix}/experts/expert3_swapped.csv")}
            ],
            "predictions": "prep_fused/fused.csv"
        },
        "audio": {"hidden": 16, "rbm_epochs": 2, "iterations": 12, "rbm_learning_rate_scale": 10.0, "step_size": 0.01},
        "mouth": {"codebook_size": 16, "fit_patches_per_region": 800},
        "motion": {"n_blocks": 150, "words": 10, "block_pca": 20, "descriptor_pca": 12, "encoder_epochs": 3},
        "svm": {"coarse_lo": -1, "coarse_hi": 1, "fine": false},
        "fusion": {"coarse_samples": 150, "local_samples": 100, "n_bags": 3, "scaling_budget": 0}
    });
    std::fs::write(
        cwd.join("config.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .unwrap();

    // Inputs consumed by later commands, produced once.
    run_ok(
        &["aggregate", "--config", "config.json", "--out", "prep_desc"],
        cwd,
    );
    run_ok(
        &[
            "fuse",
            "--strategy",
            "search",
            "--config",
            "config.json",
            "--out",
            "prep_fused",
        ],
        cwd,
    );

    check_command("smooth_tubes", &["smooth-tubes", "--config", "config.json"], cwd);
    check_command("aggregate", &["aggregate", "--config", "config.json"], cwd);
    for expert in ["audio", "mouth", "motion", "svm-on-descriptors"] {
        check_command(
            &format!("train_{expert}"),
            &["train-expert", "--expert", expert, "--config", "config.json"],
            cwd,
        );
    }
    for strategy in ["mean", "subset-mean", "search", "search-swapped", "bag", "svm-stack"] {
        check_command(
            &format!("fuse_{strategy}"),
            &["fuse", "--strategy", strategy, "--config", "config.json"],
            cwd,
        );
    }
    check_command(
        "eval",
        &[
            "eval",
            "--config",
            "config.json",
            "--gold",
            &format!("{fix}/labels.csv"),
        ],
        cwd,
    );
    println!("[PASS] criterion 11: all commands byte-identical across reruns and thread counts");
}
