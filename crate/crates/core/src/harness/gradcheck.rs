//! Gradient check of the composed detection loss on a micro-scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ScenarioConfig, TrainScene};
use crate::error::Result;
use crate::geometry::{Intrinsics, VoxelGridSpec};
use crate::model::{Bindings, ModelConfig};
use crate::tensor::gradcheck::{finite_diff_check, FdOptions};
use crate::tensor::Tensor;

/// Parameter groups checked one at a time; each is a name prefix.
pub const PARAM_GROUPS: [&str; 10] = [
    "veh.ext.", "inf.ext.", "fc.c", "fc.pyr", "veh.mfc", "inf.mfc", "veh.ccm.", "inf.ccm.", "bev.", "head.",
];

impl ScenarioConfig {
    /// Two objects, 32×64 images, a 6×4×2 grid and 4-channel model; small
    /// enough that every finite-difference probe is a full forward pass.
    pub fn micro() -> Self {
        let intrinsics = Intrinsics {
            fx: 32.0,
            fy: 32.0,
            cx: 32.0,
            cy: 16.0,
        };
        let mut cfg = Self {
            object_count: [2, 2],
            spawn_x: [9.0, 19.0],
            spawn_y: [-3.0, 3.0],
            image_size: [32, 64],
            grid: VoxelGridSpec {
                origin: [8.0, -4.0, 0.0],
                voxel_size: [2.0, 2.0, 1.0],
                counts: [6, 4, 2],
            },
            model: ModelConfig {
                channels: 4,
                stem_channels: 2,
                num_scales: 2,
                voxel_channels: 4,
                bev_channels: 4,
                ccm_hidden: 4,
                voxel_z: 2,
                anchor_size: [4.0, 1.85, 1.6],
            },
            ccr: 2,
            scr: 4,
            ..Self::default()
        };
        cfg.vehicle_camera.intrinsics = intrinsics;
        cfg.infrastructure_camera.intrinsics = intrinsics;
        cfg.train.scenes = 1;
        cfg
    }
}

/// Uniform jitter added to every initial parameter before checking.
pub const JITTER: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub tensors: usize,
    pub elements_checked: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Checks d(total loss)/d(params) group by group against central
/// differences; `opts.max_elements_per_input` caps the probes per tensor.
pub fn micro_scene_gradcheck(cfg: &ScenarioConfig, seed: u64, opts: &FdOptions) -> Result<Vec<GroupReport>> {
    cfg.validate()?;
    let mut params = cfg.model.init_params(&[(cfg.ccr, cfg.scr)], seed)?;
    // Zero biases on exactly-zero padded or dead regions put ReLU inputs at
    // exactly 0, where the loss has a corner; move off it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a17_7e55);
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-JITTER..JITTER);
        }
    }
    let scene = TrainScene::set(cfg, seed)?.remove(0);
    let mut out = Vec::new();
    for group in PARAM_GROUPS {
        let names: Vec<String> = params.names().filter(|n| n.starts_with(group)).map(str::to_string).collect();
        let inputs: Vec<Tensor> = names.iter().map(|n| params.get(n).cloned()).collect::<Result<_>>()?;
        let report = finite_diff_check(
            |g, vars| {
                let overrides: Vec<(&str, _)> = names.iter().map(String::as_str).zip(vars.iter().copied()).collect();
                let b = Bindings::bind_with(g, &params, &overrides);
                Ok(scene.loss(g, &b, cfg)?[0])
            },
            &inputs,
            opts,
        )?;
        out.push(GroupReport {
            group: group.trim_end_matches('.').to_string(),
            tensors: names.len(),
            elements_checked: report.elements_checked,
            max_rel_err: report.max_rel_err,
            passed: report.passed(),
        });
    }
    Ok(out)
}
