//! Pipeline configuration: JSON file, preset defaults, CLI overrides, and
//! the reproducible config hash recorded in every run report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use emofuse::emotions::Split;
use emofuse::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Hyperparameters as published: 200k motion blocks, 3000/400
    /// codewords, 350 bags.
    Paper,
    /// Scaled-down defaults that run in minutes: 20k blocks, 300/100
    /// codewords, 10 bags.
    Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Directory of facetube CSVs.
    pub facetubes: Option<PathBuf>,
    /// Per-frame probability CSV.
    pub frame_probs: Option<PathBuf>,
    /// Labels CSV (`clip_id,split,gold`).
    pub labels: Option<PathBuf>,
    /// Directory of audio feature matrices (`<clip>.f32` + `<clip>.json`).
    pub features: Option<PathBuf>,
    /// Directory of face PGMs named `<clip>_<frame>.pgm`.
    pub faces: Option<PathBuf>,
    /// Directory of video frame PGMs named `<clip>_<frame>.pgm`.
    pub videos: Option<PathBuf>,
    /// Video descriptor CSV.
    pub descriptors: Option<PathBuf>,
    /// Expert prediction files for fusion.
    pub experts: Vec<ExpertEntry>,
    /// Prediction CSV evaluated by `eval`.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertEntry {
    pub id: String,
    pub predictions: PathBuf,
    /// Cross-fitted predictions (train rows from valid-trained models and
    /// vice versa), used by the `search-swapped` strategy.
    #[serde(default)]
    pub swapped: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacetubeParams {
    pub window: usize,
    pub slope_threshold: f64,
    pub output_size: usize,
}

impl Default for FacetubeParams {
    fn default() -> Self {
        Self {
            window: 11,
            slope_threshold: 1.5,
            output_size: 48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioParams {
    pub hidden: usize,
    pub rbm_epochs: Option<usize>,
    pub iterations: Option<usize>,
    pub rbm_learning_rate_scale: f64,
    pub step_size: f64,
}

impl Default for AudioParams {
    fn default() -> Self {
        Self {
            hidden: 350,
            rbm_epochs: None,
            iterations: None,
            rbm_learning_rate_scale: 1.0,
            step_size: 0.0005,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MouthParams {
    pub codebook_size: Option<usize>,
    pub fit_patches_per_region: Option<usize>,
}

impl Default for MouthParams {
    fn default() -> Self {
        Self {
            codebook_size: None,
            fit_patches_per_region: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub n_blocks: Option<usize>,
    pub words: Option<usize>,
    pub block_pca: usize,
    pub descriptor_pca: usize,
    pub encoder_epochs: Option<usize>,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            n_blocks: None,
            words: None,
            block_pca: 300,
            descriptor_pca: 100,
            encoder_epochs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    /// Coarse grid exponents of 10 (inclusive range).
    pub coarse_lo: i32,
    pub coarse_hi: i32,
    /// Run the fine powers-of-2 stage.
    pub fine: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            coarse_lo: -2,
            coarse_hi: 2,
            fine: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    pub coarse_samples: usize,
    pub local_samples: usize,
    pub local_sigma: f64,
    pub objective_split: Split,
    pub apply_split: Split,
    pub n_bags: Option<usize>,
    /// Evaluation budget of the stacking scaling-factor search; 0 skips it.
    pub scaling_budget: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            coarse_samples: 2000,
            local_samples: 2000,
            local_sigma: 0.05,
            objective_split: Split::Valid,
            apply_split: Split::Test,
            n_bags: None,
            scaling_budget: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub preset: Option<Preset>,
    pub out: Option<PathBuf>,
    pub data: DataPaths,
    pub facetube: FacetubeParams,
    pub audio: AudioParams,
    pub mouth: MouthParams,
    pub motion: MotionParams,
    pub svm: SvmParams,
    pub fusion: FusionParams,
}

/// Fully resolved configuration: preset defaults applied and the seed
/// pinned.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub preset: Preset,
    pub out: PathBuf,
    pub data: DataPaths,
    pub facetube: FacetubeParams,
    pub audio: ResolvedAudio,
    pub mouth: ResolvedMouth,
    pub motion: ResolvedMotion,
    pub svm: SvmParams,
    pub fusion: ResolvedFusion,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedAudio {
    pub hidden: usize,
    pub rbm_epochs: usize,
    pub iterations: usize,
    pub rbm_learning_rate_scale: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedMouth {
    pub codebook_size: usize,
    pub fit_patches_per_region: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedMotion {
    pub n_blocks: usize,
    pub words: usize,
    pub block_pca: usize,
    pub descriptor_pca: usize,
    pub encoder_epochs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedFusion {
    pub coarse_samples: usize,
    pub local_samples: usize,
    pub local_sigma: f64,
    pub objective_split: Split,
    pub apply_split: Split,
    pub n_bags: usize,
    pub scaling_budget: usize,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config `{}`: {e}", path.display())))?;
        // Relative data paths are resolved against the config file itself,
        // so a generated fixture tree is relocatable.
        if let Some(base) = path.parent().filter(|b| !b.as_os_str().is_empty()) {
            let rebase = |p: &mut Option<PathBuf>| {
                if let Some(v) = p {
                    if v.is_relative() {
                        *v = base.join(&v);
                    }
                }
            };
            rebase(&mut cfg.data.facetubes);
            rebase(&mut cfg.data.frame_probs);
            rebase(&mut cfg.data.labels);
            rebase(&mut cfg.data.features);
            rebase(&mut cfg.data.faces);
            rebase(&mut cfg.data.videos);
            rebase(&mut cfg.data.descriptors);
            rebase(&mut cfg.data.predictions);
            for e in &mut cfg.data.experts {
                if e.predictions.is_relative() {
                    e.predictions = base.join(&e.predictions);
                }
                if let Some(sw) = &mut e.swapped {
                    if sw.is_relative() {
                        *sw = base.join(&sw);
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// Applies preset defaults and validates the seed requirement.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("a seed is mandatory (--seed or config)".into()))?;
        let preset = self.preset.unwrap_or(Preset::Desk);
        let (mouth_k, mouth_fit, motion_blocks, motion_words, bags) = match preset {
            Preset::Paper => (400, 100_000, 200_000, 3000, 350),
            Preset::Desk => (100, 20_000, 20_000, 300, 10),
        };
        let (rbm_epochs, iterations, encoder_epochs) = match preset {
            Preset::Paper => (15, 200, 1000),
            Preset::Desk => (5, 60, 100),
        };
        Ok(ResolvedConfig {
            seed,
            preset,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            data: self.data.clone(),
            facetube: self.facetube.clone(),
            audio: ResolvedAudio {
                hidden: self.audio.hidden,
                rbm_epochs: self.audio.rbm_epochs.unwrap_or(rbm_epochs),
                iterations: self.audio.iterations.unwrap_or(iterations),
                rbm_learning_rate_scale: self.audio.rbm_learning_rate_scale,
                step_size: self.audio.step_size,
            },
            mouth: ResolvedMouth {
                codebook_size: self.mouth.codebook_size.unwrap_or(mouth_k),
                fit_patches_per_region: self.mouth.fit_patches_per_region.unwrap_or(mouth_fit),
            },
            motion: ResolvedMotion {
                n_blocks: self.motion.n_blocks.unwrap_or(motion_blocks),
                words: self.motion.words.unwrap_or(motion_words),
                block_pca: self.motion.block_pca,
                descriptor_pca: self.motion.descriptor_pca,
                encoder_epochs: self.motion.encoder_epochs.unwrap_or(encoder_epochs),
            },
            svm: self.svm.clone(),
            fusion: ResolvedFusion {
                coarse_samples: self.fusion.coarse_samples,
                local_samples: self.fusion.local_samples,
                local_sigma: self.fusion.local_sigma,
                objective_split: self.fusion.objective_split,
                apply_split: self.fusion.apply_split,
                n_bags: self.fusion.n_bags.unwrap_or(bags),
                scaling_budget: self.fusion.scaling_budget,
            },
        })
    }
}

impl ResolvedConfig {
    /// SHA-256 over the command name and every input-affecting field; the
    /// output directory is excluded so reruns into fresh directories hash
    /// identically.
    pub fn hash(&self, command: &str) -> String {
        let mut clone = self.clone();
        clone.out = PathBuf::new();
        let json = serde_json::to_string(&clone).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(b"\n");
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        let path = field
            .as_ref()
            .ok_or_else(|| Error::Config(format!("config field data.{name} is required")))?;
        if !path.exists() {
            return Err(Error::Config(format!(
                "data.{name} path `{}` does not exist",
                path.display()
            )));
        }
        Ok(path.as_path())
    }
}
