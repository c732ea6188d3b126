use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ScenarioConfig;
use crate::error::{Error, Result};
use crate::eval::{intersection_bev, Box3D};
use crate::geometry::{wrap_angle, CameraParams, SceneObject, DEPTH_EPS};
use crate::tensor::Tensor;

/// Per-channel background level.
pub const BACKGROUND: [f64; 3] = [0.1, 0.1, 0.1];

const PLACEMENT_ATTEMPTS: usize = 200;
/// Clearance kept between generated footprints (m).
const CLEARANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub cam_veh: CameraParams,
    /// True infrastructure calibration, capture time included.
    pub cam_inf: CameraParams,
}

impl Scene {
    pub fn gt_boxes(&self) -> Vec<Box3D> {
        self.objects.iter().map(Box3D::from).collect()
    }
}

/// Objects travel along or against +x, like traffic on a straight road.
pub fn generate_scene(cfg: &ScenarioConfig, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = cfg.object_count;
    let count = rng.random_range(lo..=hi);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
    for k in 0..count {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let j = |rng: &mut ChaCha8Rng, s: f64| s * (1.0 + rng.random_range(-cfg.size_jitter..=cfg.size_jitter));
            let size = [
                j(&mut rng, cfg.object_size[0]),
                j(&mut rng, cfg.object_size[1]),
                j(&mut rng, cfg.object_size[2]),
            ];
            let x = rng.random_range(cfg.spawn_x[0]..cfg.spawn_x[1]);
            let y = rng.random_range(cfg.spawn_y[0]..cfg.spawn_y[1]);
            let heading = if rng.random_bool(0.5) { 0.0 } else { PI };
            let yaw = wrap_angle(heading + rng.random_range(-0.2..0.2));
            let speed = rng.random_range(cfg.speed[0]..=cfg.speed[1]);
            let cand = SceneObject {
                center: [x, y, size[2] / 2.0],
                size,
                yaw,
                velocity: [speed * yaw.cos(), speed * yaw.sin()],
                class_id: 0,
            };
            let grown = |o: &SceneObject| {
                Box3D::new(o.center, [o.size[0] + CLEARANCE, o.size[1] + CLEARANCE, o.size[2]], o.yaw)
            };
            if objects.iter().all(|o| intersection_bev(&grown(o), &grown(&cand)) == 0.0) {
                objects.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place object {} of {count} in the spawn region after {PLACEMENT_ATTEMPTS} attempts",
                k + 1
            )));
        }
    }
    Ok(Scene {
        objects,
        cam_veh: cfg.vehicle_camera.camera(0.0)?,
        cam_inf: cfg.infrastructure_camera.camera(cfg.delta_t)?,
    })
}

fn hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    poly.len() >= 3
        && (0..poly.len()).all(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
        })
}

/// Draws each object as its filled projected silhouette. Channel 0 fades
/// with depth, channel 1 encodes height in the box, channel 2 marks the
/// front half. Farther objects are drawn first so nearer ones cover them;
/// objects with any corner behind the camera are culled.
pub fn rasterize(objects: &[SceneObject], cam: &CameraParams, image_size: [usize; 2]) -> Tensor {
    let [h, w] = image_size;
    let plane = h * w;
    let mut img = vec![0.0; 3 * plane];
    for (c, v) in BACKGROUND.iter().enumerate() {
        img[c * plane..(c + 1) * plane].fill(*v);
    }
    let mut order: Vec<(f64, &SceneObject)> = objects
        .iter()
        .map(|o| (cam.to_camera(&Vector3::from(o.center)).z, o))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (depth, o) in order {
        let bx = Box3D::from(o);
        let corners = bx.corners_3d();
        let proj: Vec<_> = corners.iter().map(|c| cam.project(&Vector3::from(*c))).collect();
        if depth <= DEPTH_EPS || proj.iter().any(|p| !p.valid) {
            continue;
        }
        let poly = hull(proj.iter().map(|p| p.pixel).collect());
        let (sn, cs) = o.yaw.sin_cos();
        let front = [o.center[0] + cs * o.size[0] / 4.0, o.center[1] + sn * o.size[0] / 4.0, o.center[2]];
        let back = [o.center[0] - cs * o.size[0] / 4.0, o.center[1] - sn * o.size[0] / 4.0, o.center[2]];
        let (pf, pb) = (cam.project(&Vector3::from(front)).pixel, cam.project(&Vector3::from(back)).pixel);
        let top = proj[4..].iter().map(|p| p.pixel.1).fold(f64::INFINITY, f64::min);
        let bottom = proj[..4].iter().map(|p| p.pixel.1).fold(f64::NEG_INFINITY, f64::max);
        let shade = 1.0 / (1.0 + depth / 20.0);
        let x0 = poly.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let x1 = poly.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64 - 1.0);
        let y0 = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let y1 = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                if !inside(&poly, p) {
                    continue;
                }
                let i = y * w + x;
                let rel_h = ((bottom - p.1) / (bottom - top).max(1e-9)).clamp(0.0, 1.0);
                let d_f = (p.0 - pf.0).hypot(p.1 - pf.1);
                let d_b = (p.0 - pb.0).hypot(p.1 - pb.1);
                img[i] = 0.2 + 0.8 * shade;
                img[plane + i] = shade * (0.3 + 0.7 * rel_h);
                img[2 * plane + i] = if d_f < d_b { 0.9 * shade } else { 0.2 * shade };
            }
        }
    }
    Tensor::new(&[3, h, w], img).expect("image shape")
}
