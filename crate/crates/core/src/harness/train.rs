use serde::Serialize;

use super::{derive_seed, generate_scene, rasterize, ScenarioConfig};
use crate::error::{Error, Result};
use crate::eval::Box3D;
use crate::geometry::{displace_objects, inject_pose_error, CameraParams};
use crate::model::{
    assign_targets, encode_infrastructure, fuse_and_detect, losses, make_anchors, Bindings, FusionInputs, ParamStore,
    StageTrace, Targets,
};
use crate::tensor::{Graph, Tensor, Var};

/// A rendered scene with its assigned targets.
#[derive(Clone, Debug)]
pub struct TrainScene {
    pub image_veh: Tensor,
    pub image_inf: Tensor,
    pub cam_veh: CameraParams,
    pub cam_inf: CameraParams,
    pub gts: Vec<Box3D>,
    pub targets: Targets,
}

impl TrainScene {
    pub fn build(cfg: &ScenarioConfig, scene_seed: u64, pose_seed: u64) -> Result<Self> {
        let scene = generate_scene(cfg, scene_seed)?;
        let moved = displace_objects(&scene.objects, cfg.delta_t);
        let gts = scene.gt_boxes();
        let anchors = make_anchors(&cfg.grid, cfg.model.anchor_size);
        Ok(Self {
            image_veh: rasterize(&scene.objects, &scene.cam_veh, cfg.image_size),
            image_inf: rasterize(&moved, &scene.cam_inf, cfg.image_size),
            cam_inf: inject_pose_error(&scene.cam_inf, cfg.rot_noise_deg, cfg.trans_noise_m, pose_seed)?,
            cam_veh: scene.cam_veh,
            targets: assign_targets(&anchors, &gts),
            gts,
        })
    }

    /// The fixed training set drawn from `seed`.
    pub fn set(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Self>> {
        (0..cfg.train.scenes as u64)
            .map(|i| Self::build(cfg, derive_seed(seed, "train-scene", i), derive_seed(seed, "train-pose", i)))
            .collect()
    }

    /// Total loss of this scene on `g`, with the codec applied in-graph
    /// (no wire quantisation).
    pub fn loss(&self, g: &mut Graph, b: &Bindings, cfg: &ScenarioConfig) -> Result<[Var; 4]> {
        let mut trace = StageTrace::default();
        let iv = g.constant(self.image_inf.clone());
        let ft = encode_infrastructure(g, b, &cfg.model, iv, cfg.ccr, cfg.scr, &mut trace)?;
        let vv = g.constant(self.image_veh.clone());
        let inputs = FusionInputs {
            image_veh: vv,
            cam_veh: &self.cam_veh,
            ft_inf: ft,
            cam_inf: &self.cam_inf,
            ccr: cfg.ccr,
            scr: cfg.scr,
            grid: &cfg.grid,
            fusion: cfg.fusion,
        };
        let dense = fuse_and_detect(g, b, &cfg.model, &inputs, &mut trace)?;
        let l = losses(g, &dense, &self.targets)?;
        Ok([l.total, l.bbox, l.cls, l.dir])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: usize,
    pub total: f64,
    pub bbox: f64,
    pub cls: f64,
    pub dir: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    /// `steps + 1` entries: the loss before each update and after the last.
    pub trace: Vec<LossRecord>,
}

/// Full-batch gradient descent from freshly initialised weights.
pub fn train_toy(cfg: &ScenarioConfig, steps: usize, lr: f64, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let params = cfg.model.init_params(&[(cfg.ccr, cfg.scr)], seed)?;
    train_from(cfg, params, steps, lr, seed)
}

/// Full-batch gradient descent on the mean scene loss, with the global
/// gradient norm capped at `cfg.train.clip_norm`.
pub fn train_from(cfg: &ScenarioConfig, mut params: ParamStore, steps: usize, lr: f64, seed: u64) -> Result<TrainOutcome> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    cfg.model.check_params(&params, &[(cfg.ccr, cfg.scr)])?;
    let scenes = TrainScene::set(cfg, seed)?;
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut g = Graph::new();
        let b = Bindings::bind(&mut g, &params);
        let mut parts: [Vec<Var>; 4] = Default::default();
        for sc in &scenes {
            for (k, v) in sc.loss(&mut g, &b, cfg)?.into_iter().enumerate() {
                parts[k].push(v);
            }
        }
        let mean: Vec<f64> = parts
            .iter()
            .map(|p| p.iter().map(|&v| g.value(v).item()).sum::<f64>() / p.len() as f64)
            .collect();
        if !mean[0].is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {step}")));
        }
        let mut rec = LossRecord {
            step,
            total: mean[0],
            bbox: mean[1],
            cls: mean[2],
            dir: mean[3],
            grad_norm: 0.0,
        };
        if step == steps {
            trace.push(rec);
            break;
        }
        let root = g.mean_list(&parts[0])?;
        let grads = g.backward(root)?;
        let norm = b
            .iter()
            .filter_map(|(_, v)| grads.get(*v))
            .map(|t| t.data().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at step {step}")));
        }
        rec.grad_norm = norm;
        trace.push(rec);
        let clip = cfg.train.clip_norm;
        let factor = if clip > 0.0 && norm > clip { clip / norm } else { 1.0 };
        for (name, v) in b.iter() {
            if let Some(gr) = grads.get(*v) {
                let p = params.get_mut(name)?;
                for (w, d) in p.data_mut().iter_mut().zip(gr.data()) {
                    *w -= lr * factor * d;
                }
            }
        }
    }
    Ok(TrainOutcome { params, trace })
}
