//! Pinhole cameras, voxel-centre feature sampling, and the two error sources
//! of cooperative perception: calibration (pose) noise and capture-time
//! asynchrony between agents.
//!
//! Frames: the world frame is the ego vehicle frame (x forward, y left,
//! z up). Camera frames are x right, y down, z along the optical axis.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::bilinear_gather;
use crate::tensor::{Graph, Tensor, Var};

/// Points closer than this to the image plane count as behind the camera.
pub const DEPTH_EPS: f64 = 1e-3;

const ORTHO_TOL: f64 = 1e-6;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraParams {
    /// Intrinsics (px).
    pub k: Matrix3<f64>,
    /// World-to-camera rotation.
    pub r: Matrix3<f64>,
    /// World-to-camera translation (m).
    pub t: Vector3<f64>,
    /// Capture time (s).
    pub capture_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// (u, v) in pixels; meaningless when `!valid`.
    pub pixel: (f64, f64),
    pub depth: f64,
    pub valid: bool,
}

impl CameraParams {
    pub fn new(k: Matrix3<f64>, r: Matrix3<f64>, t: Vector3<f64>, capture_time: f64) -> Result<Self> {
        let cam = Self {
            k,
            r,
            t,
            capture_time,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with world +z as up.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        intrinsics: Intrinsics,
        capture_time: f64,
    ) -> Result<Self> {
        let fwd = target - eye;
        if fwd.norm() < 1e-9 {
            return Err(Error::config("camera eye and target coincide"));
        }
        let fwd = fwd.normalize();
        let right = fwd.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            return Err(Error::config("camera looks straight up or down"));
        }
        let right = right.normalize();
        let down = fwd.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let t = -(r * eye);
        Self::new(intrinsics.matrix(), r, t, capture_time)
    }

    pub fn validate(&self) -> Result<()> {
        let ortho = (self.r.transpose() * self.r - Matrix3::identity()).amax();
        let det = self.r.determinant();
        if ortho > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::config(format!(
                "rotation not orthonormal (|RᵀR−I|={ortho:.2e}, det={det:.9})"
            )));
        }
        let k = &self.k;
        let lower = [k[(1, 0)], k[(2, 0)], k[(2, 1)]];
        if lower.iter().any(|v| v.abs() > 1e-12) || k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(Error::config(
                "intrinsics must be upper-triangular with positive focal lengths",
            ));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r * p + self.t
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.r.transpose() * self.t)
    }

    pub fn project(&self, p: &Vector3<f64>) -> Projection {
        let pc = self.to_camera(p);
        let depth = pc.z;
        if depth <= DEPTH_EPS {
            return Projection {
                pixel: (0.0, 0.0),
                depth,
                valid: false,
            };
        }
        let h = self.k * pc;
        Projection {
            pixel: (h.x / h.z, h.y / h.z),
            depth,
            valid: true,
        }
    }

    /// World point seen at pixel `(u, v)` with camera-frame depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let k_inv = self.k.try_inverse().expect("intrinsics are invertible");
        let pc = k_inv * Vector3::new(u, v, 1.0) * depth;
        self.r.transpose() * (pc - self.t)
    }

    /// `R (row-major, 9) ⊕ t (3) ⊕ K (row-major, 9)`.
    pub fn flatten(&self) -> [f64; 21] {
        let mut out = [0.0; 21];
        for i in 0..3 {
            for j in 0..3 {
                out[i * 3 + j] = self.r[(i, j)];
                out[12 + i * 3 + j] = self.k[(i, j)];
            }
            out[9 + i] = self.t[i];
        }
        out
    }

    pub fn from_flat(flat: &[f64; 21], capture_time: f64) -> Result<Self> {
        let r = Matrix3::from_row_slice(&flat[0..9]);
        let t = Vector3::new(flat[9], flat[10], flat[11]);
        let k = Matrix3::from_row_slice(&flat[12..21]);
        Self::new(k, r, t, capture_time)
    }
}

/// `N×3` world points → (`N×2` pixels, `N` depths, validity).
pub fn project_points(points: &Tensor, cam: &CameraParams) -> Result<(Tensor, Tensor, Vec<bool>)> {
    if points.rank() != 2 || points.dim(1) != 3 {
        return Err(Error::config(format!(
            "project_points expects [N,3], got {:?}",
            points.shape()
        )));
    }
    let n = points.dim(0);
    let mut px = Vec::with_capacity(2 * n);
    let mut depth = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for p in points.data().chunks(3) {
        let pr = cam.project(&Vector3::new(p[0], p[1], p[2]));
        px.extend([pr.pixel.0, pr.pixel.1]);
        depth.push(pr.depth);
        valid.push(pr.valid);
    }
    Ok((Tensor::new(&[n, 2], px)?, Tensor::new(&[n], depth)?, valid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridSpec {
    /// Minimum corner (m, vehicle frame).
    pub origin: [f64; 3],
    pub voxel_size: [f64; 3],
    /// (N_x, N_y, N_z)
    pub counts: [usize; 3],
}

impl VoxelGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.counts.contains(&0) || self.voxel_size.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config(format!(
                "voxel grid needs positive counts and sizes, got {:?} / {:?}",
                self.counts, self.voxel_size
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + (ix as f64 + 0.5) * self.voxel_size[0],
            self.origin[1] + (iy as f64 + 0.5) * self.voxel_size[1],
            self.origin[2] + (iz as f64 + 0.5) * self.voxel_size[2],
        )
    }

    /// Voxel centres in `[N_x, N_y, N_z]` row-major order.
    pub fn centers(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let [nx, ny, nz] = self.counts;
        (0..nx).flat_map(move |x| (0..ny).flat_map(move |y| (0..nz).map(move |z| self.center(x, y, z))))
    }
}

/// Feature-map coordinates at which each voxel centre is sampled, or `None`
/// when the centre is behind the camera or outside the map.
pub fn voxel_sample_points(
    cam: &CameraParams,
    grid: &VoxelGridSpec,
    feature_hw: (usize, usize),
    feature_stride: usize,
) -> Result<Vec<Option<(f64, f64)>>> {
    grid.validate()?;
    if feature_stride == 0 {
        return Err(Error::config("feature stride must be >= 1"));
    }
    let (h, w) = feature_hw;
    let s = feature_stride as f64;
    let (x_max, y_max) = ((w - 1) as f64, (h - 1) as f64);
    Ok(grid
        .centers()
        .map(|c| {
            let pr = cam.project(&c);
            if !pr.valid {
                return None;
            }
            let (x, y) = (pr.pixel.0 / s, pr.pixel.1 / s);
            ((0.0..=x_max).contains(&x) && (0.0..=y_max).contains(&y)).then_some((x, y))
        })
        .collect())
}

/// Fills a voxel grid from one camera's feature map `[C,H,W]`.
/// Returns `[N_x, N_y, N_z, C]` features and the per-voxel validity mask.
pub fn sample_voxel_features(
    feature: &Tensor,
    cam: &CameraParams,
    grid: &VoxelGridSpec,
    feature_stride: usize,
) -> Result<(Tensor, Vec<bool>)> {
    if feature.rank() != 3 {
        return Err(Error::config("voxel sampling expects a [C,H,W] feature map"));
    }
    let pts = voxel_sample_points(cam, grid, (feature.dim(1), feature.dim(2)), feature_stride)?;
    let valid = pts.iter().map(Option::is_some).collect();
    let [nx, ny, nz] = grid.counts;
    let v = bilinear_gather(feature, &pts)?.reshape(&[nx, ny, nz, feature.dim(0)])?;
    Ok((v, valid))
}

/// Recorded variant of [`sample_voxel_features`]; gradients reach the feature
/// map only.
pub fn sample_voxel_features_var(
    g: &mut Graph,
    feature: Var,
    cam: &CameraParams,
    grid: &VoxelGridSpec,
    feature_stride: usize,
) -> Result<(Var, Arc<Vec<bool>>)> {
    let shape = g.shape(feature).to_vec();
    if shape.len() != 3 {
        return Err(Error::config("voxel sampling expects a [C,H,W] feature map"));
    }
    let pts = voxel_sample_points(cam, grid, (shape[1], shape[2]), feature_stride)?;
    let valid = Arc::new(pts.iter().map(Option::is_some).collect::<Vec<_>>());
    let flat = g.bilinear_gather(feature, Arc::new(pts))?;
    let [nx, ny, nz] = grid.counts;
    let v = g.reshape(flat, &[nx, ny, nz, shape[0]])?;
    Ok((v, valid))
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Perturbs a camera pose about its own centre: a rotation of angle
/// `N(0, rot_noise_deg²)` (clamped to ±3σ) around a uniformly random axis, and
/// `N(0, trans_noise_m²)` on each camera-frame translation axis. For a fixed
/// seed the perturbation scales linearly with the noise magnitudes.
pub fn inject_pose_error(
    cam: &CameraParams,
    rot_noise_deg: f64,
    trans_noise_m: f64,
    seed: u64,
) -> Result<CameraParams> {
    if !(rot_noise_deg >= 0.0 && trans_noise_m >= 0.0) {
        return Err(Error::config("pose noise magnitudes must be >= 0"));
    }
    if rot_noise_deg == 0.0 && trans_noise_m == 0.0 {
        return Ok(cam.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let axis = Vector3::new(normal(), normal(), normal());
    let z_angle = normal().clamp(-3.0, 3.0);
    let dt = Vector3::new(normal(), normal(), normal()) * trans_noise_m;
    let axis = if axis.norm() > 1e-12 {
        Unit::new_normalize(axis)
    } else {
        Vector3::z_axis()
    };
    let dr = Rotation3::from_axis_angle(&axis, z_angle * rot_noise_deg.to_radians()).into_inner();
    let r = nearest_rotation(&(dr * cam.r));
    let t = dr * cam.t + dt;
    CameraParams::new(cam.k, r, t, cam.capture_time)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Box centre (m).
    pub center: [f64; 3],
    /// (length, width, height) in m.
    pub size: [f64; 3],
    /// Heading around +z, in `(-π, π]`.
    pub yaw: f64,
    /// Ground-plane velocity (m/s).
    pub velocity: [f64; 2],
    pub class_id: u32,
}

/// Advances every object along its ground velocity by `delta_t` seconds.
pub fn displace_objects(objects: &[SceneObject], delta_t: f64) -> Vec<SceneObject> {
    objects
        .iter()
        .map(|o| {
            let mut moved = o.clone();
            moved.center[0] += o.velocity[0] * delta_t;
            moved.center[1] += o.velocity[1] * delta_t;
            moved
        })
        .collect()
}
