//! Experiment configuration, read from TOML. Every field has a default, so an
//! empty file (or no file) is a valid configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use comv_core::jscc::{CompressionRatio, CLASSIFICATION_RATIO, RECONSTRUCTION_RATIO};
use comv_core::nn::{DescentConfig, StepRule};
use comv_core::semantic::pipeline::{Fusion, SceneDetectSpec};
use comv_core::semantic::scene::{RenderSpec, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    JsccCoop,
    JsccSingle,
    JsccVoting,
    DigitalBaseline,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::JsccCoop, Scheme::JsccSingle, Scheme::JsccVoting, Scheme::DigitalBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::JsccCoop => "jscc_coop",
            Scheme::JsccSingle => "jscc_single",
            Scheme::JsccVoting => "jscc_voting",
            Scheme::DigitalBaseline => "digital_baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Mean,
    ConfidenceWeighted,
    Concat,
}

impl From<FusionKind> for Fusion {
    fn from(f: FusionKind) -> Self {
        match f {
            FusionKind::Mean => Fusion::Mean,
            FusionKind::ConfidenceWeighted => Fusion::ConfidenceWeighted,
            FusionKind::Concat => Fusion::Concat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Synthetic data: detection scenes and the single-target classification split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene_side: usize,
    pub view_side: usize,
    pub users: usize,
    pub classes: usize,
    pub overlap: (f64, f64),
    pub targets_per_scene: (usize, usize),
    pub target_size: (f64, f64),
    pub occlusion: f64,
    pub class_side: usize,
    pub train_items: usize,
    pub test_items: usize,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub class_noise: f32,
    pub scene_noise: f32,
    pub texture_amp: f32,
    pub scene_background_max: f32,
    pub scene_background_freq: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene_side: 96,
            view_side: 48,
            users: 3,
            classes: 4,
            overlap: (0.2, 0.5),
            targets_per_scene: (1, 5),
            target_size: (8.0, 14.0),
            occlusion: 0.45,
            class_side: 32,
            train_items: 800,
            test_items: 200,
            train_scenes: 100,
            test_scenes: 40,
            class_noise: 0.4,
            scene_noise: 0.03,
            texture_amp: 0.05,
            scene_background_max: 0.3,
            scene_background_freq: 0.05,
        }
    }
}

impl DatasetConfig {
    pub fn scene_spec(&self) -> SceneSpec {
        SceneSpec {
            scene_side: self.scene_side,
            view_side: self.view_side,
            users: self.users,
            overlap: self.overlap,
            targets: self.targets_per_scene,
            target_size: self.target_size,
        }
    }

    pub fn class_render(&self) -> RenderSpec {
        RenderSpec { texture_amp: self.texture_amp, noise_std: self.class_noise, ..RenderSpec::default() }
    }

    pub fn scene_render(&self) -> RenderSpec {
        RenderSpec {
            texture_amp: self.texture_amp,
            noise_std: self.scene_noise,
            background: (0.0, self.scene_background_max),
            background_freq: self.scene_background_freq,
        }
    }
}

/// Gradient-descent settings shared by every trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub train_snr_db: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { learning_rate: 0.02, batch_size: 16, epochs: 20, optimizer: Optimizer::Sgd, train_snr_db: 0.0 }
    }
}

impl TrainingConfig {
    pub fn descent(&self, seed: u64) -> DescentConfig {
        DescentConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            step_rule: match self.optimizer {
                Optimizer::Sgd => StepRule::Sgd,
                Optimizer::Adam => StepRule::adam(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationConfig {
    pub ratio: f64,
    pub feature_dim: usize,
    pub fusion: FusionKind,
    /// Single-user stage: every (item, user) view is a sample.
    pub single: TrainingConfig,
    /// Cooperative stage with the encoder frozen.
    pub coop: TrainingConfig,
    /// Classifier for codec-decoded images in the digital baseline.
    pub backbone: TrainingConfig,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        let base = TrainingConfig::default();
        Self {
            ratio: CLASSIFICATION_RATIO,
            feature_dim: 64,
            fusion: FusionKind::Mean,
            single: base.clone(),
            coop: TrainingConfig { epochs: 10, ..base.clone() },
            backbone: TrainingConfig { epochs: 10, ..base },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub ratio: f64,
    pub training: TrainingConfig,
    pub snr_db: f64,
    pub threshold: f64,
    pub iou: f64,
    /// Pose-guided registration radius in pixels; `None` searches the whole
    /// overlap window.
    pub search_radius: Option<i64>,
    pub pose_error: i64,
    pub max_registration_failure: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            ratio: RECONSTRUCTION_RATIO,
            training: TrainingConfig { learning_rate: 0.001, batch_size: 8, epochs: 20, optimizer: Optimizer::Adam, train_snr_db: 10.0 },
            snr_db: 10.0,
            threshold: 0.4,
            iou: 0.5,
            search_radius: Some(4),
            pose_error: 3,
            max_registration_failure: 0.5,
        }
    }
}

impl DetectionConfig {
    pub fn detect_spec(&self) -> SceneDetectSpec {
        SceneDetectSpec { threshold: self.threshold, search_radius: self.search_radius, pose_error: self.pose_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigitalConfig {
    pub ldpc_n: usize,
    pub code_seed: u64,
    pub max_iters: usize,
    /// Digital bit budget as a multiple of the JSCC channel-use budget.
    pub budget_factor: f64,
    /// FER threshold search: frames per SNR point and bisection bounds.
    pub fer_frames: usize,
    pub fer_target: f64,
    pub threshold_search: (f64, f64),
}

impl Default for DigitalConfig {
    fn default() -> Self {
        Self {
            ldpc_n: 256,
            code_seed: 1,
            max_iters: 50,
            budget_factor: 3.0,
            fer_frames: 400,
            fer_target: 0.5,
            threshold_search: (-2.0, 8.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { schemes: Scheme::ALL.to_vec(), snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0], seeds: (0..5).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub images: usize,
    pub repetitions: usize,
    pub snr_db: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { images: 100, repetitions: 3, snr_db: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbConfig {
    pub servers: usize,
    pub vehicles_per_server: usize,
    pub latency: u64,
    pub jitter: u64,
    pub rounds: usize,
    pub keys: usize,
}

impl Default for KbConfig {
    fn default() -> Self {
        Self { servers: 3, vehicles_per_server: 2, latency: 1, jitter: 1, rounds: 2, keys: 4 }
    }
}

/// Top-level configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub classification: ClassificationConfig,
    pub detection: DetectionConfig,
    pub digital: DigitalConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
    pub kb: KbConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if self.sweep.snr_db.is_empty() || self.sweep.seeds.is_empty() {
            bail!("sweep needs at least one SNR and one seed");
        }
        if !(0.0..=1.0).contains(&d.occlusion) {
            bail!("occlusion must lie in [0, 1]");
        }
        if d.classes != comv_core::semantic::scene::NUM_CLASSES {
            bail!("the synthetic renderer draws exactly {} classes", comv_core::semantic::scene::NUM_CLASSES);
        }
        if !(d.scene_background_max > 0.0 && d.scene_background_max < comv_core::semantic::scene::TARGET_RANGE.0) {
            bail!("scene background must stay below the target brightness range");
        }
        if d.class_side % 8 != 0 || d.view_side % 8 != 0 {
            bail!("image sides must be multiples of 8");
        }
        d.scene_spec().validate().context("scene geometry")?;
        CompressionRatio::new(self.classification.ratio).context("classification ratio")?;
        CompressionRatio::new(self.detection.ratio).context("detection ratio")?;
        if self.digital.budget_factor <= 0.0 {
            bail!("budget factor must be positive");
        }
        Ok(())
    }
}
