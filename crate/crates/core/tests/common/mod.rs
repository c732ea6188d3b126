//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls the library routine it is checking.

#![allow(dead_code)]

use std::sync::Arc;

use emiff::eval::{Box3D, Detection, Frame, IouMetric, RangeBucket};
use emiff::geometry::{CameraParams, Intrinsics, VoxelGridSpec};
use emiff::tensor::gradcheck::{finite_diff_check, FdOptions};
use emiff::{Graph, Result, Tensor, Var};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, lo, hi, r)
}

// ---------------------------------------------------------------------------
// gradient suite

type Scalar = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// `sum(v ⊙ R)` with a fixed pseudo-random `R`, so every output element
/// reaches the gradient with a different weight.
fn readout(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(v).to_vec();
    let r = g.constant(Tensor::uniform(&shape, -1.0, 1.0, &mut rng(seed)));
    let p = g.mul(v, r)?;
    Ok(g.sum(p))
}

/// Values in ±[0.05, 1], away from the ReLU corner.
fn off_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let mut t = uniform(shape, 0.05, 1.0, r);
    for v in t.data_mut() {
        if r.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn mask(n: usize, r: &mut ChaCha8Rng) -> Arc<Vec<bool>> {
    Arc::new((0..n).map(|_| r.random_bool(0.6)).collect())
}

type Case = fn(&mut ChaCha8Rng, u64) -> (Vec<Tensor>, Scalar);

fn cases() -> Vec<(&'static str, Case)> {
    vec![
        ("add", |r, s| {
            let x = vec![uniform(&[3, 4], -1.0, 1.0, r), uniform(&[3, 4], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.add(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("sub", |r, s| {
            let x = vec![uniform(&[3, 4], -1.0, 1.0, r), uniform(&[3, 4], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.sub(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("mul", |r, s| {
            let x = vec![uniform(&[3, 4], -1.0, 1.0, r), uniform(&[3, 4], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.mul(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("scale", |r, s| {
            let c = r.random_range(-2.0..2.0);
            (vec![uniform(&[5], -1.0, 1.0, r)], Box::new(move |g, v| { let o = g.scale(v[0], c); readout(g, o, s) }))
        }),
        ("sigmoid", |r, s| {
            (vec![uniform(&[6], -4.0, 4.0, r)], Box::new(move |g, v| { let o = g.sigmoid(v[0]); readout(g, o, s) }))
        }),
        ("relu", |r, s| {
            (vec![off_zero(&[8], r)], Box::new(move |g, v| { let o = g.relu(v[0]); readout(g, o, s) }))
        }),
        ("softmax", |r, s| {
            let axis = r.random_range(0..2);
            (vec![uniform(&[3, 4], -2.0, 2.0, r)], Box::new(move |g, v| { let o = g.softmax(v[0], axis)?; readout(g, o, s) }))
        }),
        ("sum", |r, _| {
            (vec![uniform(&[2, 3], -1.0, 1.0, r)], Box::new(|g, v| { let o = g.sum(v[0]); Ok(g.scale(o, 0.7)) }))
        }),
        ("mean_list", |r, s| {
            let x = (0..3).map(|_| uniform(&[2, 3], -1.0, 1.0, r)).collect();
            (x, Box::new(move |g, v| { let o = g.mean_list(v)?; readout(g, o, s) }))
        }),
        ("weighted_sum", |r, s| {
            let mut x: Vec<Tensor> = (0..3).map(|_| uniform(&[2, 3], -1.0, 1.0, r)).collect();
            x.push(uniform(&[3], 0.0, 1.0, r));
            (x, Box::new(move |g, v| { let o = g.weighted_sum(&v[..3], v[3])?; readout(g, o, s) }))
        }),
        ("mean_pool", |r, s| {
            (vec![uniform(&[3, 2, 3], -1.0, 1.0, r)], Box::new(move |g, v| { let o = g.mean_pool(v[0]); readout(g, o, s) }))
        }),
        ("channel_mul", |r, s| {
            let x = vec![uniform(&[3, 2, 2], -1.0, 1.0, r), uniform(&[3], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.channel_mul(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("bias_add", |r, s| {
            let x = vec![uniform(&[3, 2, 2], -1.0, 1.0, r), uniform(&[3], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.bias_add(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("linear", |r, s| {
            let x = vec![uniform(&[4, 3], -1.0, 1.0, r), uniform(&[3], -1.0, 1.0, r), uniform(&[4], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.linear(v[0], v[1], v[2])?; readout(g, o, s) }))
        }),
        ("concat", |r, s| {
            let x = vec![uniform(&[2, 3], -1.0, 1.0, r), uniform(&[2, 2], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.concat(v, 1)?; readout(g, o, s) }))
        }),
        ("permute", |r, s| {
            (vec![uniform(&[2, 3, 4], -1.0, 1.0, r)], Box::new(move |g, v| { let o = g.permute(v[0], &[2, 0, 1])?; readout(g, o, s) }))
        }),
        ("reshape", |r, s| {
            (vec![uniform(&[2, 6], -1.0, 1.0, r)], Box::new(move |g, v| { let o = g.reshape(v[0], &[3, 4])?; readout(g, o, s) }))
        }),
        ("masked_mean", |r, s| {
            let x = vec![uniform(&[4, 3], -1.0, 1.0, r), uniform(&[4, 3], -1.0, 1.0, r)];
            let m = [mask(4, r), mask(4, r)];
            (x, Box::new(move |g, v| { let o = g.masked_mean(v, &m)?; readout(g, o, s) }))
        }),
        ("conv2d", |r, s| {
            let stride = r.random_range(1..3);
            let x = vec![uniform(&[2, 5, 5], -1.0, 1.0, r), uniform(&[3, 2, 3, 3], -1.0, 1.0, r), uniform(&[3], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.conv2d(v[0], v[1], Some(v[2]), stride, 1)?; readout(g, o, s) }))
        }),
        ("conv3d", |r, s| {
            let x = vec![uniform(&[2, 3, 4, 3], -1.0, 1.0, r), uniform(&[2, 2, 3, 3, 3], -1.0, 1.0, r), uniform(&[2], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.conv3d(v[0], v[1], Some(v[2]))?; readout(g, o, s) }))
        }),
        ("deform_conv2d", |r, s| {
            let x = vec![uniform(&[2, 4, 4], -1.0, 1.0, r), uniform(&[2, 2, 3, 3], -1.0, 1.0, r), uniform(&[18, 4, 4], -1.5, 1.5, r)];
            (x, Box::new(move |g, v| { let o = g.deform_conv2d(v[0], v[1], v[2])?; readout(g, o, s) }))
        }),
        ("bilinear_sample", |r, s| {
            let c = Tensor::from_vec(vec![r.random_range(-0.7..4.7), r.random_range(-0.7..3.7)]);
            (vec![uniform(&[2, 4, 5], -1.0, 1.0, r), c], Box::new(move |g, v| { let o = g.bilinear_sample(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("bilinear_gather", |r, s| {
            let pts: Vec<Option<(f64, f64)>> = (0..6)
                .map(|_| r.random_bool(0.8).then(|| (r.random_range(-0.5..4.5), r.random_range(-0.5..3.5))))
                .collect();
            let pts = Arc::new(pts);
            (vec![uniform(&[2, 4, 5], -1.0, 1.0, r)], Box::new(move |g, v| { let o = g.bilinear_gather(v[0], pts.clone())?; readout(g, o, s) }))
        }),
        ("upsample_bilinear", |r, s| {
            let f = r.random_range(2..4);
            (vec![uniform(&[2, 3, 3], -1.0, 1.0, r)], Box::new(move |g, v| { let o = g.upsample_bilinear(v[0], f)?; readout(g, o, s) }))
        }),
        ("attention_1d", |r, s| {
            let x = vec![uniform(&[4], -1.0, 1.0, r), uniform(&[3, 4], -1.0, 1.0, r)];
            (x, Box::new(move |g, v| { let o = g.attention_1d(v[0], v[1])?; readout(g, o, s) }))
        }),
        ("smooth_l1_sum", |r, _| {
            // targets far enough that no residual sits on the |x| = β seam
            let t = Arc::new(uniform(&[7, 2, 2], -2.5, 2.5, r));
            let w = Arc::new(uniform(&[7, 2, 2], 0.0, 1.0, r));
            (vec![uniform(&[7, 2, 2], -2.5, 2.5, r)], Box::new(move |g, v| g.smooth_l1_sum(v[0], t.clone(), w.clone(), 1.0)))
        }),
        ("focal_sum", |r, _| {
            let t = Arc::new(Tensor::new(&[1, 2, 3], (0..6).map(|_| f64::from(r.random_bool(0.3))).collect()).unwrap());
            let w = Arc::new(uniform(&[1, 2, 3], 0.0, 1.0, r));
            (vec![uniform(&[1, 2, 3], -3.0, 3.0, r)], Box::new(move |g, v| g.focal_sum(v[0], t.clone(), w.clone(), 0.25, 2.0)))
        }),
        ("softmax_ce_sum", |r, _| {
            let labels = Arc::new((0..6).map(|_| r.random_range(0..2)).collect::<Vec<usize>>());
            let w = Arc::new((0..6).map(|_| r.random_range(0.0..1.0)).collect::<Vec<f64>>());
            (vec![uniform(&[2, 2, 3], -2.0, 2.0, r)], Box::new(move |g, v| g.softmax_ce_sum(v[0], labels.clone(), w.clone())))
        }),
    ]
}

pub struct OpGradient {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

/// Every differentiable operator, `instances` seeded random float64 inputs
/// each, tape gradient against central differences over all elements.
pub fn op_gradient_suite(instances: usize) -> Vec<OpGradient> {
    let opts = FdOptions {
        h: 1e-6,
        tol: 1e-4,
        max_elements_per_input: None,
        seed: 0,
    };
    cases()
        .into_iter()
        .enumerate()
        .map(|(k, (op, case))| {
            let mut worst: f64 = 0.0;
            for i in 0..instances {
                let seed = 1000 * k as u64 + i as u64;
                let (inputs, f) = case(&mut rng(seed), seed ^ 0xabcd);
                let rep = finite_diff_check(|g, v| f(g, v), &inputs, &opts).unwrap();
                worst = worst.max(rep.max_rel_err);
            }
            OpGradient {
                op,
                instances,
                max_rel_err: worst,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// geometry

/// Per-voxel scalar loop: centre, pinhole projection, stride, then a
/// hand-written bilinear read with zero outside the map.
pub fn voxel_oracle(feature: &Tensor, cam: &CameraParams, grid: &VoxelGridSpec, stride: usize) -> (Vec<f64>, Vec<bool>) {
    let (c, h, w) = (feature.dim(0), feature.dim(1), feature.dim(2));
    let f = cam.flatten();
    let (r, t, k) = (&f[0..9], &f[9..12], &f[12..21]);
    let mut out = Vec::new();
    let mut valid = Vec::new();
    for ix in 0..grid.counts[0] {
        for iy in 0..grid.counts[1] {
            for iz in 0..grid.counts[2] {
                let p = [
                    grid.origin[0] + grid.voxel_size[0] * (ix as f64 + 0.5),
                    grid.origin[1] + grid.voxel_size[1] * (iy as f64 + 0.5),
                    grid.origin[2] + grid.voxel_size[2] * (iz as f64 + 0.5),
                ];
                let mut q = [0.0; 3];
                for a in 0..3 {
                    q[a] = r[3 * a] * p[0] + r[3 * a + 1] * p[1] + r[3 * a + 2] * p[2] + t[a];
                }
                let mut px = [0.0; 3];
                for a in 0..3 {
                    px[a] = k[3 * a] * q[0] + k[3 * a + 1] * q[1] + k[3 * a + 2] * q[2];
                }
                let x = px[0] / px[2] / stride as f64;
                let y = px[1] / px[2] / stride as f64;
                let ok = q[2] > 1e-3 && x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
                valid.push(ok);
                for ch in 0..c {
                    if !ok {
                        out.push(0.0);
                        continue;
                    }
                    let (x0, y0) = (x.floor(), y.floor());
                    let mut acc = 0.0;
                    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                        let (xi, yi) = (x0 + dx, y0 + dy);
                        if xi < 0.0 || yi < 0.0 || xi > (w - 1) as f64 || yi > (h - 1) as f64 {
                            continue;
                        }
                        let wt = (1.0 - (x - xi).abs()) * (1.0 - (y - yi).abs());
                        acc += wt * feature.at(&[ch, yi as usize, xi as usize]);
                    }
                    out.push(acc);
                }
            }
        }
    }
    (out, valid)
}

// ---------------------------------------------------------------------------
// evaluation

fn inside(b: &Box3D, x: f64, y: f64) -> bool {
    let (dx, dy) = (x - b.center[0], y - b.center[1]);
    let (s, c) = b.yaw.sin_cos();
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= b.size[0] / 2.0 && v.abs() <= b.size[1] / 2.0
}

/// Rotated BEV IoU by jittered-grid sampling over the pair's bounding rectangle.
pub fn monte_carlo_iou_bev(a: &Box3D, b: &Box3D, samples: usize, seed: u64) -> f64 {
    let reach = |bx: &Box3D| bx.size[0].hypot(bx.size[1]) / 2.0;
    let lo_x = (a.center[0] - reach(a)).min(b.center[0] - reach(b));
    let hi_x = (a.center[0] + reach(a)).max(b.center[0] + reach(b));
    let lo_y = (a.center[1] - reach(a)).min(b.center[1] - reach(b));
    let hi_y = (a.center[1] + reach(a)).max(b.center[1] + reach(b));
    // Jittered grid: one uniform sample per cell, far lower variance than
    // plain uniform sampling for area estimates.
    let n = (samples as f64).sqrt().ceil() as usize;
    let (dx, dy) = ((hi_x - lo_x) / n as f64, (hi_y - lo_y) / n as f64);
    let mut r = rng(seed);
    let (mut ia, mut ib, mut both) = (0usize, 0usize, 0usize);
    for k in 0..n * n {
        let x = lo_x + ((k % n) as f64 + r.random::<f64>()) * dx;
        let y = lo_y + ((k / n) as f64 + r.random::<f64>()) * dy;
        let (pa, pb) = (inside(a, x, y), inside(b, x, y));
        ia += usize::from(pa);
        ib += usize::from(pb);
        both += usize::from(pa && pb);
    }
    let union = ia + ib - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

/// Enumerates every injective detection→GT assignment above the threshold
/// and keeps the one that is lexicographically best when detections are
/// visited by descending score, comparing (matched, IoU) at each position.
fn best_assignment(frame: &Frame, metric: IouMetric, thr: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..frame.dets.len()).collect();
    order.sort_by(|&a, &b| frame.dets[b].score.total_cmp(&frame.dets[a].score));
    let iou: Vec<Vec<f64>> = frame
        .dets
        .iter()
        .map(|d| frame.gts.iter().map(|g| metric.iou(&d.bbox, g)).collect())
        .collect();
    let key = |a: &[Option<usize>]| -> Vec<(u8, f64)> {
        order
            .iter()
            .map(|&i| a[i].map_or((0, 0.0), |j| (1, iou[i][j])))
            .collect()
    };
    let mut best: Option<(Vec<(u8, f64)>, Vec<Option<usize>>)> = None;
    let mut cur = vec![None; frame.dets.len()];
    let mut used = vec![false; frame.gts.len()];
    fn rec(
        i: usize,
        cur: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        iou: &[Vec<f64>],
        thr: f64,
        visit: &mut dyn FnMut(&[Option<usize>]),
    ) {
        if i == cur.len() {
            visit(cur);
            return;
        }
        cur[i] = None;
        rec(i + 1, cur, used, iou, thr, visit);
        for j in 0..used.len() {
            if !used[j] && iou[i][j] >= thr {
                used[j] = true;
                cur[i] = Some(j);
                rec(i + 1, cur, used, iou, thr, visit);
                used[j] = false;
                cur[i] = None;
            }
        }
    }
    let mut visit = |a: &[Option<usize>]| {
        let k = key(a);
        let better = match &best {
            None => true,
            Some((bk, _)) => k.partial_cmp(bk) == Some(std::cmp::Ordering::Greater),
        };
        if better {
            best = Some((k, a.to_vec()));
        }
    };
    rec(0, &mut cur, &mut used, &iou, thr, &mut visit);
    best.map(|(_, a)| a).unwrap_or_default()
}

/// 40-point interpolated AP per bucket: precision at recall level r is the
/// best precision over all score cut-offs reaching recall ≥ r, with the
/// recall test done in integers.
pub fn brute_force_ap(frames: &[Frame], metric: IouMetric, thr: f64, buckets: &[RangeBucket]) -> Vec<Option<f64>> {
    let assign: Vec<_> = frames.iter().map(|f| best_assignment(f, metric, thr)).collect();
    buckets
        .iter()
        .map(|bk| {
            let mut n_gt = 0usize;
            let mut scored: Vec<(f64, bool)> = Vec::new();
            for (f, a) in frames.iter().zip(&assign) {
                n_gt += f.gts.iter().filter(|g| bk.contains(g.distance())).count();
                for (d, m) in f.dets.iter().zip(a) {
                    let dist = m.map_or(d.bbox.distance(), |j| f.gts[j].distance());
                    if bk.contains(dist) {
                        scored.push((d.score, m.is_some()));
                    }
                }
            }
            if n_gt == 0 {
                return None;
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut cuts = Vec::new();
            let mut tp = 0usize;
            for (k, (_, hit)) in scored.iter().enumerate() {
                tp += usize::from(*hit);
                cuts.push((tp, k + 1));
            }
            let mut sum = 0.0;
            for i in 1..=40usize {
                let p = cuts
                    .iter()
                    .filter(|(tp, _)| tp * 40 >= i * n_gt)
                    .map(|&(tp, k)| tp as f64 / k as f64)
                    .fold(0.0, f64::max);
                sum += p;
            }
            Some(sum / 40.0)
        })
        .collect()
}

/// Greedy suppression checked against every earlier survivor, no pruning.
pub fn nms_oracle(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    for i in idx {
        if keep.iter().all(|&k| emiff::eval::iou_bev(&dets[k].bbox, &dets[i].bbox) <= thr) {
            keep.push(i);
        }
    }
    keep.into_iter().map(|i| dets[i]).collect()
}

// ---------------------------------------------------------------------------
// random instances

/// Camera looking at a random ground point, a grid around that point and a
/// feature stride.
pub fn random_instance(r: &mut ChaCha8Rng) -> (CameraParams, VoxelGridSpec, usize) {
    let target = Vector3::new(r.random_range(5.0..30.0), r.random_range(-8.0..8.0), 0.0);
    let eye = Vector3::new(r.random_range(-5.0..5.0), r.random_range(-10.0..10.0), r.random_range(1.0..8.0));
    let f = r.random_range(20.0..80.0);
    let intr = Intrinsics {
        fx: f,
        fy: f * r.random_range(0.9..1.1),
        cx: r.random_range(20.0..40.0),
        cy: r.random_range(10.0..20.0),
    };
    let cam = CameraParams::look_at(eye, target, intr, 0.0).unwrap();
    let grid = VoxelGridSpec {
        origin: [target.x - 6.0, target.y - 5.0, r.random_range(-1.0..0.5)],
        voxel_size: [r.random_range(0.5..2.0), r.random_range(0.5..2.0), r.random_range(0.3..1.0)],
        counts: [r.random_range(2..9), r.random_range(2..8), r.random_range(1..4)],
    };
    (cam, grid, r.random_range(1..5))
}

pub fn random_box(r: &mut ChaCha8Rng, near: Option<&Box3D>) -> Box3D {
    let (cx, cy) = match near {
        Some(b) => (b.center[0] + r.random_range(-1.5..1.5), b.center[1] + r.random_range(-1.0..1.0)),
        None => (r.random_range(2.0..80.0), r.random_range(-20.0..20.0)),
    };
    Box3D::new(
        [cx, cy, r.random_range(0.5..1.0)],
        [r.random_range(3.5..4.8), r.random_range(1.6..2.0), r.random_range(1.4..1.8)],
        r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// ≤ 6 detections and ≤ 4 ground truths, detections mostly near a GT.
pub fn random_frame(r: &mut ChaCha8Rng) -> Frame {
    let gts: Vec<Box3D> = (0..r.random_range(0..=4)).map(|_| random_box(r, None)).collect();
    let dets = (0..r.random_range(0..=6))
        .map(|_| {
            let near = (!gts.is_empty() && r.random_bool(0.8)).then(|| gts[r.random_range(0..gts.len())]);
            let mut b = random_box(r, near.as_ref());
            if let Some(g) = near {
                b.yaw = g.yaw + r.random_range(-0.3..0.3);
            }
            Detection {
                bbox: b,
                score: r.random_range(0.0..1.0),
                class_id: 0,
            }
        })
        .collect();
    Frame { dets, gts }
}

// ---------------------------------------------------------------------------
// statistics

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
