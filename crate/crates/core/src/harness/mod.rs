//! Synthetic scenes, the end-to-end runner, toy training and sweeps.

mod gradcheck;
mod report;
mod run;
mod scene;
mod sweep;
mod train;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{CameraParams, Intrinsics, VoxelGridSpec};
use crate::link::{LinkConfig, WireDtype};
use crate::model::{validate_rates, FusionLevel, ModelConfig, BASE_STRIDE};

pub use gradcheck::{micro_scene_gradcheck, GroupReport, PARAM_GROUPS};
pub use report::{
    compression_csv, loss_trace_csv, pose_csv, results_csv, svg_line_plot, write_text, PlotSeries, RESULTS_HEADER,
};
pub use run::{run_pipeline, run_scene, ExperimentResult, SceneRun, IOU_THRESH};
pub use scene::{generate_scene, rasterize, Scene, BACKGROUND};
pub use sweep::{sweep_compression, sweep_pose_noise, CompressionRow, PoseRow, WeightsOrigin};
pub use train::{train_from, train_toy, LossRecord, TrainOutcome, TrainScene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub intrinsics: Intrinsics,
}

impl CameraSpec {
    pub fn camera(&self, capture_time: f64) -> Result<CameraParams> {
        CameraParams::look_at(
            Vector3::from(self.eye),
            Vector3::from(self.target),
            self.intrinsics,
            capture_time,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub scenes: usize,
    pub steps: usize,
    pub lr: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenes: 4,
            steps: 300,
            lr: 0.05,
            clip_norm: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub ccr: Vec<usize>,
    pub scr: Vec<usize>,
    /// Fine-tuning steps per rate; 0 evaluates shared weights.
    pub finetune_steps: usize,
    pub rot_noise_deg: Vec<f64>,
    pub seeds_per_point: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ccr: vec![1, 2, 4, 8, 16],
            scr: vec![1, 4, 16],
            finetune_steps: 0,
            rot_noise_deg: vec![0.0, 0.5, 1.0, 2.0],
            seeds_per_point: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Inclusive object-count range.
    pub object_count: [usize; 2],
    pub spawn_x: [f64; 2],
    pub spawn_y: [f64; 2],
    /// Ground speed range (m/s).
    pub speed: [f64; 2],
    /// Nominal (l, w, h) in m, jittered by ±`size_jitter` (fraction).
    pub object_size: [f64; 3],
    pub size_jitter: f64,
    pub vehicle_camera: CameraSpec,
    pub infrastructure_camera: CameraSpec,
    /// (H, W) of both images.
    pub image_size: [usize; 2],
    /// Infrastructure capture time minus vehicle capture time (s).
    pub delta_t: f64,
    pub rot_noise_deg: f64,
    pub trans_noise_m: f64,
    pub grid: VoxelGridSpec,
    pub ccr: usize,
    pub scr: usize,
    pub fusion: FusionLevel,
    pub link: LinkConfig,
    pub wire_dtype: WireDtype,
    pub model: ModelConfig,
    /// Scenes evaluated per run.
    pub eval_scenes: usize,
    pub score_thresh: f64,
    pub nms_iou: f64,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let intrinsics = Intrinsics {
            fx: 64.0,
            fy: 64.0,
            cx: 64.0,
            cy: 32.0,
        };
        Self {
            seed: 0,
            object_count: [2, 5],
            spawn_x: [6.0, 30.0],
            spawn_y: [-8.0, 8.0],
            speed: [0.0, 15.0],
            object_size: [4.0, 1.85, 1.6],
            size_jitter: 0.1,
            vehicle_camera: CameraSpec {
                eye: [0.0, 0.0, 1.6],
                target: [20.0, 0.0, 0.8],
                intrinsics,
            },
            infrastructure_camera: CameraSpec {
                eye: [18.0, -16.0, 7.0],
                target: [18.0, 0.0, 0.0],
                intrinsics,
            },
            image_size: [64, 128],
            delta_t: 0.0,
            rot_noise_deg: 0.0,
            trans_noise_m: 0.0,
            grid: VoxelGridSpec {
                origin: [2.0, -12.0, 0.0],
                voxel_size: [1.0, 1.0, 0.5],
                counts: [32, 24, 4],
            },
            ccr: 1,
            scr: 1,
            fusion: FusionLevel::Voxel,
            link: LinkConfig::default(),
            wire_dtype: WireDtype::F32,
            model: ModelConfig::toy(),
            eval_scenes: 4,
            score_thresh: 0.05,
            nms_iou: 0.1,
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn range_ok(r: [f64; 2], strict: bool) -> bool {
    r[0].is_finite() && r[1].is_finite() && if strict { r[0] < r[1] } else { r[0] <= r[1] }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate()?;
        self.link.validate()?;
        if self.object_count[0] > self.object_count[1] {
            return Err(Error::config("object_count range is reversed"));
        }
        if !range_ok(self.spawn_x, true) || !range_ok(self.spawn_y, true) {
            return Err(Error::config("spawn region must have lo < hi on both axes"));
        }
        if !range_ok(self.speed, false) || self.speed[0] < 0.0 {
            return Err(Error::config("speed range must be non-negative with lo <= hi"));
        }
        if self.object_size.iter().any(|&s| !(s > 0.0)) || !(0.0..0.5).contains(&self.size_jitter) {
            return Err(Error::config("object sizes must be > 0 and size_jitter in [0, 0.5)"));
        }
        let d = self.model.image_divisor().max(32);
        let [h, w] = self.image_size;
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(Error::config(format!("image size {h}×{w} must be divisible by {d}")));
        }
        if self.grid.counts[2] != self.model.voxel_z {
            return Err(Error::config(format!(
                "grid has {} height layers but model.voxel_z is {}",
                self.grid.counts[2], self.model.voxel_z
            )));
        }
        if !(self.rot_noise_deg >= 0.0 && self.trans_noise_m >= 0.0 && self.delta_t.is_finite()) {
            return Err(Error::config("pose noise must be >= 0 and delta_t finite"));
        }
        if self.ccr > u16::MAX as usize || self.scr > u16::MAX as usize {
            return Err(Error::config("rates must fit in u16"));
        }
        validate_rates(&self.model, self.ccr, self.scr, h / BASE_STRIDE, w / BASE_STRIDE)?;
        if self.eval_scenes == 0 || self.train.scenes == 0 {
            return Err(Error::config("eval_scenes and train.scenes must be >= 1"));
        }
        if !(self.train.lr >= 0.0) || !(self.train.clip_norm >= 0.0) {
            return Err(Error::config("train.lr and train.clip_norm must be >= 0"));
        }
        self.vehicle_camera.camera(0.0)?;
        self.infrastructure_camera.camera(0.0)?;
        Ok(())
    }

    /// Short digest of the configuration (and optionally the weights).
    pub fn fingerprint(&self, weights: Option<&crate::model::ParamStore>) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serialises"));
        if let Some(w) = weights {
            h.update(w.to_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deterministic sub-seed for stream `k` of purpose `tag`.
pub fn derive_seed(seed: u64, tag: &str, k: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(k.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
