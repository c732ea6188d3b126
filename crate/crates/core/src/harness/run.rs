use std::time::Instant;

use serde::Serialize;

use super::{derive_seed, generate_scene, rasterize, Scene, ScenarioConfig};
use crate::error::{Result, StageExt};
use crate::eval::{ap_compute_frames, default_buckets, BucketAp, Detection, Frame, IouMetric};
use crate::geometry::{displace_objects, inject_pose_error};
use crate::link::{average_byte, deserialize, serialize, transmit, Packet};
use crate::model::{
    decode_and_nms, encode_infrastructure, fuse_and_detect, make_anchors, Bindings, DenseDetections, FusionInputs,
    ParamStore, StageTrace,
};
use crate::tensor::Graph;

pub const IOU_THRESH: f64 = 0.5;

/// One scene through the full chain.
#[derive(Clone, Debug)]
pub struct SceneRun {
    pub scene: Scene,
    pub detections: Vec<Detection>,
    pub packet: Packet,
    pub arrival_delay: f64,
    pub trace: StageTrace,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub fingerprint: String,
    pub ccr: usize,
    pub scr: usize,
    pub ap_3d: Vec<BucketAp>,
    pub ap_bev: Vec<BucketAp>,
    /// Mean packet size (header + payload), bytes.
    pub average_byte: f64,
    pub payload_bytes: f64,
    /// Mean arrival delay (s).
    pub arrival_delay: f64,
    pub detections: usize,
    pub ground_truth: usize,
    /// Excluded from CSV output, which must be reproducible.
    pub wall_time_s: f64,
    #[serde(skip)]
    pub frames: Vec<Frame>,
    #[serde(skip)]
    pub trace: StageTrace,
}

impl ExperimentResult {
    pub fn overall_ap_3d(&self) -> Option<f64> {
        self.ap_3d[0].ap
    }
}

/// Renders both views, perturbs the infrastructure calibration, and runs
/// extraction → compression → wire → decompression → fusion → detection.
pub fn run_scene(cfg: &ScenarioConfig, weights: &ParamStore, scene_seed: u64, pose_seed: u64) -> Result<SceneRun> {
    let scene = generate_scene(cfg, scene_seed).stage("generate_scene")?;
    let img_veh = rasterize(&scene.objects, &scene.cam_veh, cfg.image_size);
    let moved = displace_objects(&scene.objects, cfg.delta_t);
    let img_inf = rasterize(&moved, &scene.cam_inf, cfg.image_size);
    let cam_inf_sent =
        inject_pose_error(&scene.cam_inf, cfg.rot_noise_deg, cfg.trans_noise_m, pose_seed).stage("inject_pose_error")?;

    let mut g = Graph::inference();
    let b = Bindings::bind(&mut g, weights);
    let mut trace = StageTrace::default();
    let iv = g.constant(img_inf);
    let ft = encode_infrastructure(&mut g, &b, &cfg.model, iv, cfg.ccr, cfg.scr, &mut trace)?;
    let packet = serialize(g.value(ft), &cam_inf_sent, cfg.ccr as u16, cfg.scr as u16, cfg.wire_dtype).stage("serialize")?;
    trace.record("serialize", &[packet.len()]);
    let delivery = transmit(&packet, &cfg.link).stage("transmit")?;
    trace.record("transmit", &[packet.len()]);
    let rx = deserialize(&packet).stage("deserialize")?;
    trace.record("deserialize", rx.tensor.shape());

    let vv = g.constant(img_veh);
    let ft_rx = g.constant(rx.tensor);
    let inputs = FusionInputs {
        image_veh: vv,
        cam_veh: &scene.cam_veh,
        ft_inf: ft_rx,
        cam_inf: &rx.camera,
        ccr: rx.ccr as usize,
        scr: rx.scr as usize,
        grid: &cfg.grid,
        fusion: cfg.fusion,
    };
    let dense = fuse_and_detect(&mut g, &b, &cfg.model, &inputs, &mut trace)?;
    let dense = DenseDetections::from_graph(&g, &dense);
    let anchors = make_anchors(&cfg.grid, cfg.model.anchor_size);
    let detections = decode_and_nms(&dense, &anchors, cfg.score_thresh, cfg.nms_iou).stage("decode_and_nms")?;
    trace.record("decode_and_nms", &[detections.len()]);
    Ok(SceneRun {
        scene,
        detections,
        packet,
        arrival_delay: delivery.arrival_delay,
        trace,
    })
}

/// Evaluates `cfg.eval_scenes` scenes drawn from `cfg.seed`.
pub fn run_pipeline(cfg: &ScenarioConfig, weights: &ParamStore) -> Result<ExperimentResult> {
    cfg.validate()?;
    cfg.model
        .check_params(weights, &[(cfg.ccr, cfg.scr)])
        .stage("load_weights")?;
    let start = Instant::now();
    let mut frames = Vec::with_capacity(cfg.eval_scenes);
    let mut packets = Vec::with_capacity(cfg.eval_scenes);
    let mut delay = 0.0;
    let mut trace = StageTrace::default();
    for i in 0..cfg.eval_scenes as u64 {
        let run = run_scene(
            cfg,
            weights,
            derive_seed(cfg.seed, "scene", i),
            derive_seed(cfg.seed, "pose", i),
        )?;
        if i == 0 {
            trace = run.trace.clone();
        }
        delay += run.arrival_delay;
        frames.push(Frame {
            gts: run.scene.gt_boxes(),
            dets: run.detections,
        });
        packets.push(run.packet);
    }
    let buckets = default_buckets();
    let ap_3d = ap_compute_frames(&frames, IouMetric::ThreeD, IOU_THRESH, &buckets);
    let ap_bev = ap_compute_frames(&frames, IouMetric::Bev, IOU_THRESH, &buckets);
    trace.record("ap_compute", &[frames.len()]);
    let n = packets.len() as f64;
    Ok(ExperimentResult {
        fingerprint: cfg.fingerprint(Some(weights)),
        ccr: cfg.ccr,
        scr: cfg.scr,
        ap_3d,
        ap_bev,
        average_byte: average_byte(&packets)?,
        payload_bytes: packets.iter().map(|p| p.payload_len() as f64).sum::<f64>() / n,
        arrival_delay: delay / n,
        detections: frames.iter().map(|f| f.dets.len()).sum(),
        ground_truth: frames.iter().map(|f| f.gts.len()).sum(),
        wall_time_s: start.elapsed().as_secs_f64(),
        frames,
        trace,
    })
}
