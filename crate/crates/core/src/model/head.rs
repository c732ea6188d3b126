//! Dense head, anchors, box coding, target assignment, losses and NMS.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{conv_block, Bindings, FOCAL_ALPHA, FOCAL_GAMMA, LAMBDA_CLS, LAMBDA_DIR, NEG_IOU, POS_IOU, SMOOTH_L1_BETA};
use crate::error::{Error, Result};
use crate::eval::{iou_bev, Box3D, Detection};
use crate::geometry::{wrap_angle, VoxelGridSpec};
use crate::tensor::ops::sigmoid;
use crate::tensor::{Graph, Tensor, Var};

/// Size exponents are clamped to this before decoding.
const MAX_LOG_SCALE: f64 = 4.0;

/// One fixed-size, zero-yaw anchor per BEV cell, resting on the grid floor.
/// Index `ix * ny + iy`, matching the `[·, X, Y]` head layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchors {
    pub boxes: Vec<Box3D>,
    pub nx: usize,
    pub ny: usize,
}

pub fn make_anchors(grid: &VoxelGridSpec, size: [f64; 3]) -> Anchors {
    let [nx, ny, _] = grid.counts;
    let z = grid.origin[2] + size[2] / 2.0;
    let mut boxes = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            let c = grid.center(ix, iy, 0);
            boxes.push(Box3D::new([c.x, c.y, z], size, 0.0));
        }
    }
    Anchors { boxes, nx, ny }
}

fn wrap_half(a: f64) -> f64 {
    (a + PI / 2.0).rem_euclid(PI) - PI / 2.0
}

/// Residuals `(dx, dy, dz, dl, dw, dh, dθ)` and the direction bin.
pub fn encode_box(gt: &Box3D, anchor: &Box3D) -> ([f64; 7], usize) {
    let [la, wa, ha] = anchor.size;
    let diag = la.hypot(wa);
    let rel = wrap_angle(gt.yaw - anchor.yaw);
    let dir = usize::from(rel.cos() < 0.0);
    (
        [
            (gt.center[0] - anchor.center[0]) / diag,
            (gt.center[1] - anchor.center[1]) / diag,
            (gt.center[2] - anchor.center[2]) / ha,
            (gt.size[0] / la).ln(),
            (gt.size[1] / wa).ln(),
            (gt.size[2] / ha).ln(),
            wrap_half(rel),
        ],
        dir,
    )
}

pub fn decode_box(anchor: &Box3D, d: &[f64; 7], dir: usize) -> Box3D {
    let [la, wa, ha] = anchor.size;
    let diag = la.hypot(wa);
    let sz = |i: usize, base: f64| base * d[i].clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE).exp();
    let flip = if dir == 1 { PI } else { 0.0 };
    Box3D::new(
        [
            anchor.center[0] + d[0] * diag,
            anchor.center[1] + d[1] * diag,
            anchor.center[2] + d[2] * ha,
        ],
        [sz(3, la), sz(4, wa), sz(5, ha)],
        wrap_angle(anchor.yaw + d[6] + flip),
    )
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    /// `[1, X, Y]` logits
    pub cls: Var,
    /// `[7, X, Y]` residuals
    pub reg: Var,
    /// `[2, X, Y]` logits
    pub dir: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseDetections {
    pub cls: Tensor,
    pub reg: Tensor,
    pub dir: Tensor,
}

impl DenseDetections {
    pub fn from_graph(g: &Graph, v: &DenseVars) -> Self {
        Self {
            cls: g.value(v.cls).clone(),
            reg: g.value(v.reg).clone(),
            dir: g.value(v.dir).clone(),
        }
    }
}

pub fn detect_head(g: &mut Graph, b: &Bindings, bev: Var) -> Result<DenseVars> {
    Ok(DenseVars {
        cls: conv_block(g, b, "head.cls", bev, 1, false)?,
        reg: conv_block(g, b, "head.reg", bev, 1, false)?,
        dir: conv_block(g, b, "head.dir", bev, 1, false)?,
    })
}

/// Greedy rotated-BEV NMS; ties keep the earlier detection first.
pub fn nms(mut dets: Vec<Detection>, nms_iou: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    let radius = |d: &Detection| d.bbox.size[0].hypot(d.bbox.size[1]) / 2.0;
    let mut keep: Vec<Detection> = Vec::new();
    for d in dets {
        let suppressed = keep.iter().any(|k| {
            let dist = (k.bbox.center[0] - d.bbox.center[0]).hypot(k.bbox.center[1] - d.bbox.center[1]);
            dist < radius(k) + radius(&d) && iou_bev(&k.bbox, &d.bbox) > nms_iou
        });
        if !suppressed {
            keep.push(d);
        }
    }
    keep
}

pub fn decode_and_nms(dense: &DenseDetections, anchors: &Anchors, score_thresh: f64, nms_iou: f64) -> Result<Vec<Detection>> {
    let n = anchors.boxes.len();
    if dense.cls.len() != n || dense.reg.len() != 7 * n || dense.dir.len() != 2 * n {
        return Err(Error::config(format!(
            "dense output {:?}/{:?}/{:?} does not cover {n} anchors",
            dense.cls.shape(),
            dense.reg.shape(),
            dense.dir.shape()
        )));
    }
    let mut cands = Vec::new();
    for (i, anchor) in anchors.boxes.iter().enumerate() {
        let score = sigmoid(dense.cls.data()[i]);
        if score < score_thresh {
            continue;
        }
        let d: [f64; 7] = std::array::from_fn(|k| dense.reg.data()[k * n + i]);
        let dir = usize::from(dense.dir.data()[n + i] > dense.dir.data()[i]);
        cands.push(Detection {
            bbox: decode_box(anchor, &d, dir),
            score,
            class_id: 0,
        });
    }
    Ok(nms(cands, nms_iou))
}

/// Per-anchor training targets; all weights already carry the
/// `1 / max(1, positives)` normalisation.
#[derive(Clone, Debug)]
pub struct Targets {
    pub cls_target: Arc<Tensor>,
    pub cls_weight: Arc<Tensor>,
    pub reg_target: Arc<Tensor>,
    pub reg_weight: Arc<Tensor>,
    pub dir_label: Arc<Vec<usize>>,
    pub dir_weight: Arc<Vec<f64>>,
    pub num_pos: usize,
    pub num_neg: usize,
}

/// BEV-IoU matching: positive at ≥ 0.6, negative below 0.45, ignored in
/// between. Each box also claims its best-overlapping anchor so that no
/// object goes without a positive.
pub fn assign_targets(anchors: &Anchors, gts: &[Box3D]) -> Targets {
    let n = anchors.boxes.len();
    let mut best: Vec<(f64, usize)> = vec![(0.0, 0); n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (j, gt) in gts.iter().enumerate() {
        let mut top = (0.0, usize::MAX);
        for (i, a) in anchors.boxes.iter().enumerate() {
            let iou = iou_bev(a, gt);
            if iou > best[i].0 {
                best[i] = (iou, j);
            }
            if iou > top.0 {
                top = (iou, i);
            }
        }
        if top.1 != usize::MAX {
            owner[top.1] = Some(j);
        }
    }
    for i in 0..n {
        if owner[i].is_none() && best[i].0 >= POS_IOU {
            owner[i] = Some(best[i].1);
        }
    }
    let num_pos = owner.iter().filter(|o| o.is_some()).count();
    let num_neg = (0..n).filter(|&i| owner[i].is_none() && best[i].0 < NEG_IOU).count();
    let norm = 1.0 / num_pos.max(1) as f64;
    let mut cls_t = vec![0.0; n];
    let mut cls_w = vec![0.0; n];
    let mut reg_t = vec![0.0; 7 * n];
    let mut reg_w = vec![0.0; 7 * n];
    let mut dir_l = vec![0usize; n];
    let mut dir_w = vec![0.0; n];
    for i in 0..n {
        match owner[i] {
            Some(j) => {
                let (d, dir) = encode_box(&gts[j], &anchors.boxes[i]);
                cls_t[i] = 1.0;
                cls_w[i] = norm;
                for k in 0..7 {
                    reg_t[k * n + i] = d[k];
                    reg_w[k * n + i] = norm;
                }
                dir_l[i] = dir;
                dir_w[i] = norm;
            }
            None if best[i].0 < NEG_IOU => cls_w[i] = norm,
            None => {}
        }
    }
    let (nx, ny) = (anchors.nx, anchors.ny);
    let t = |c: usize, d: Vec<f64>| Arc::new(Tensor::new(&[c, nx, ny], d).expect("target shape"));
    Targets {
        cls_target: t(1, cls_t),
        cls_weight: t(1, cls_w),
        reg_target: t(7, reg_t),
        reg_weight: t(7, reg_w),
        dir_label: Arc::new(dir_l),
        dir_weight: Arc::new(dir_w),
        num_pos,
        num_neg,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossBundle {
    pub bbox: Var,
    pub cls: Var,
    pub dir: Var,
    pub total: Var,
}

impl LossBundle {
    /// `(bbox, cls, dir, total)` values.
    pub fn values(&self, g: &Graph) -> [f64; 4] {
        [self.bbox, self.cls, self.dir, self.total].map(|v| g.value(v).item())
    }
}

pub fn losses(g: &mut Graph, pred: &DenseVars, t: &Targets) -> Result<LossBundle> {
    let bbox = g.smooth_l1_sum(pred.reg, t.reg_target.clone(), t.reg_weight.clone(), SMOOTH_L1_BETA)?;
    let cls = g.focal_sum(pred.cls, t.cls_target.clone(), t.cls_weight.clone(), FOCAL_ALPHA, FOCAL_GAMMA)?;
    let dir = g.softmax_ce_sum(pred.dir, t.dir_label.clone(), t.dir_weight.clone())?;
    let wc = g.scale(cls, LAMBDA_CLS);
    let wd = g.scale(dir, LAMBDA_DIR);
    let total = g.add(bbox, wc)?;
    let total = g.add(total, wd)?;
    if !g.value(total).is_finite() {
        return Err(Error::Numeric("non-finite detection loss".into()));
    }
    Ok(LossBundle { bbox, cls, dir, total })
}
