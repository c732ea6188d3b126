//! Rotated-box overlap and range-bucketed average precision.

use serde::{Deserialize, Serialize};

use crate::geometry::SceneObject;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    /// Geometric centre (m).
    pub center: [f64; 3],
    /// (length, width, height) in m; length runs along the heading.
    pub size: [f64; 3],
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Self {
        Self { center, size, yaw }
    }

    /// Footprint corners, counter-clockwise.
    pub fn corners_bev(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.size[0] / 2.0, self.size[1] / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
            .map(|(x, y)| (self.center[0] + c * x - s * y, self.center[1] + s * x + c * y))
    }

    /// Bottom face (ccw) then top face.
    pub fn corners_3d(&self) -> [[f64; 3]; 8] {
        let bev = self.corners_bev();
        let (z0, z1) = self.z_range();
        let mut out = [[0.0; 3]; 8];
        for (i, (x, y)) in bev.iter().enumerate() {
            out[i] = [*x, *y, z0];
            out[i + 4] = [*x, *y, z1];
        }
        out
    }

    pub fn z_range(&self) -> (f64, f64) {
        let h = self.size[2] / 2.0;
        (self.center[2] - h, self.center[2] + h)
    }

    pub fn area_bev(&self) -> f64 {
        self.size[0] * self.size[1]
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    /// Ground-plane distance from the ego origin.
    pub fn distance(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }
}

impl From<&SceneObject> for Box3D {
    fn from(o: &SceneObject) -> Self {
        Self::new(o.center, o.size, o.yaw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: Box3D,
    pub score: f64,
    pub class_id: u32,
}

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn polygon_area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() / 2.0
}

/// Sutherland–Hodgman clipping of `subject` against a convex ccw `clip`.
fn clip_polygon(subject: &[Pt], clip: &[Pt]) -> Vec<Pt> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (dp, dq) = (cross(a, b, p), cross(a, b, q));
            if dp >= 0.0 {
                out.push(p);
            }
            if (dp >= 0.0) != (dq >= 0.0) {
                let t = dp / (dp - dq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
    }
    out
}

pub fn intersection_bev(a: &Box3D, b: &Box3D) -> f64 {
    polygon_area(&clip_polygon(&a.corners_bev(), &b.corners_bev()))
}

pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = intersection_bev(a, b);
    let union = a.area_bev() + b.area_bev() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = (a1.min(b1) - a0.max(b0)).max(0.0);
    let inter = intersection_bev(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IouMetric {
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "bev")]
    Bev,
}

impl IouMetric {
    pub fn iou(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            Self::ThreeD => iou_3d(a, b),
            Self::Bev => iou_bev(a, b),
        }
    }
}

/// Half-open distance interval `[lo, hi)` in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeBucket {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl RangeBucket {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.lo && d < self.hi
    }
}

/// Overall, near, middle and far ranges.
pub fn default_buckets() -> Vec<RangeBucket> {
    vec![
        RangeBucket::new("0-100m", 0.0, 100.0),
        RangeBucket::new("0-30m", 0.0, 30.0),
        RangeBucket::new("30-50m", 30.0, 50.0),
        RangeBucket::new("50-100m", 50.0, 100.0),
    ]
}

pub const RECALL_POINTS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketAp {
    pub bucket: RangeBucket,
    pub num_gt: usize,
    /// `None` when the bucket holds no ground truth.
    pub ap: Option<f64>,
}

/// Scored detections and ground truth for one scene.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub dets: Vec<Detection>,
    pub gts: Vec<Box3D>,
}

/// Greedy matching in descending score; returns, per detection in the
/// given order, the index of the matched ground truth.
pub fn greedy_match(dets: &[Detection], gts: &[Box3D], metric: IouMetric, iou_thresh: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gts.len()];
    let mut matched = vec![None; dets.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let iou = metric.iou(&dets[i].bbox, gt);
            if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            matched[i] = Some(j);
        }
    }
    matched
}

/// 40-point interpolated AP from `(score, is_tp)` pairs and a GT count.
pub fn average_precision(mut scored: Vec<(f64, bool)>, num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(scored.len());
    for (k, (_, hit)) in scored.iter().enumerate() {
        tp += usize::from(*hit);
        curve.push((tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // running max of precision from the tail
    for k in (0..curve.len().saturating_sub(1)).rev() {
        curve[k].1 = curve[k].1.max(curve[k + 1].1);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for i in 1..=RECALL_POINTS {
        let r = i as f64 / RECALL_POINTS as f64;
        while k < curve.len() && curve[k].0 < r - 1e-12 {
            k += 1;
        }
        if k < curve.len() {
            sum += curve[k].1;
        }
    }
    sum / RECALL_POINTS as f64
}

/// AP per range bucket over a set of scenes.
pub fn ap_compute_frames(frames: &[Frame], metric: IouMetric, iou_thresh: f64, buckets: &[RangeBucket]) -> Vec<BucketAp> {
    let matches: Vec<_> = frames
        .iter()
        .map(|f| greedy_match(&f.dets, &f.gts, metric, iou_thresh))
        .collect();
    buckets
        .iter()
        .map(|bucket| {
            let mut num_gt = 0;
            let mut scored = Vec::new();
            for (frame, m) in frames.iter().zip(&matches) {
                num_gt += frame.gts.iter().filter(|g| bucket.contains(g.distance())).count();
                for (det, mj) in frame.dets.iter().zip(m) {
                    match mj {
                        Some(j) if bucket.contains(frame.gts[*j].distance()) => scored.push((det.score, true)),
                        None if bucket.contains(det.bbox.distance()) => scored.push((det.score, false)),
                        _ => {}
                    }
                }
            }
            BucketAp {
                bucket: bucket.clone(),
                num_gt,
                ap: (num_gt > 0).then(|| average_precision(scored, num_gt)),
            }
        })
        .collect()
}

pub fn ap_compute(
    dets: &[Detection],
    gts: &[Box3D],
    metric: IouMetric,
    iou_thresh: f64,
    buckets: &[RangeBucket],
) -> Vec<BucketAp> {
    let frame = Frame {
        dets: dets.to_vec(),
        gts: gts.to_vec(),
    };
    ap_compute_frames(std::slice::from_ref(&frame), metric, iou_thresh, buckets)
}
