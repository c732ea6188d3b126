//! Bilinear sampling with zero padding, and bilinear upsampling.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// The four lattice neighbours of a real-valued sample point, with their
/// interpolation weights and the weights' partial derivatives in x and y.
/// Neighbours outside the map carry weight zero.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Taps {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub dx: [f64; 4],
    pub dy: [f64; 4],
}

/// Coordinates farther than this outside the map are treated as empty.
const FAR: f64 = 1e9;

pub(crate) fn taps(x: f64, y: f64, h: usize, w: usize) -> Taps {
    let mut t = Taps::default();
    if !(x.is_finite() && y.is_finite()) || x.abs() > FAR || y.abs() > FAR {
        return t;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy), -(1.0 - fy), -(1.0 - fx)),
        (x0 + 1, y0, fx * (1.0 - fy), 1.0 - fy, -fx),
        (x0, y0 + 1, (1.0 - fx) * fy, -fy, 1.0 - fx),
        (x0 + 1, y0 + 1, fx * fy, fy, fx),
    ];
    for (i, &(cx, cy, wt, dwx, dwy)) in corners.iter().enumerate() {
        if cx >= 0 && cy >= 0 && (cx as usize) < w && (cy as usize) < h {
            t.idx[i] = cy as usize * w + cx as usize;
            t.w[i] = wt;
            t.dx[i] = dwx;
            t.dy[i] = dwy;
        }
    }
    t
}

fn check_map(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    if shape.len() != 3 {
        return Err(Error::config(format!("{op} expects a [C,H,W] map, got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2]))
}

/// Samples every channel of `feature [C,H,W]` at pixel coordinates `(x, y)`
/// (x along W). Out-of-map neighbours read as zero.
pub fn bilinear_sample(feature: &Tensor, x: f64, y: f64) -> Result<Tensor> {
    let (c, h, w) = check_map(feature.shape(), "bilinear_sample")?;
    let t = taps(x, y, h, w);
    let plane = h * w;
    let out = (0..c)
        .map(|ch| {
            let p = &feature.data()[ch * plane..(ch + 1) * plane];
            (0..4).map(|i| t.w[i] * p[t.idx[i]]).sum()
        })
        .collect();
    Tensor::new(&[c], out)
}

/// Samples `feature [C,H,W]` at each point; `None` points give zero rows.
/// Returns `[N, C]`.
pub fn bilinear_gather(feature: &Tensor, points: &[Option<(f64, f64)>]) -> Result<Tensor> {
    let (c, h, w) = check_map(feature.shape(), "bilinear_gather")?;
    if points.is_empty() {
        return Err(Error::config("bilinear_gather needs at least one point"));
    }
    let plane = h * w;
    let fd = feature.data();
    let mut out = vec![0.0; points.len() * c];
    for (n, pt) in points.iter().enumerate() {
        let Some((x, y)) = *pt else { continue };
        let t = taps(x, y, h, w);
        let row = &mut out[n * c..(n + 1) * c];
        for (ch, o) in row.iter_mut().enumerate() {
            let p = &fd[ch * plane..(ch + 1) * plane];
            *o = (0..4).map(|i| t.w[i] * p[t.idx[i]]).sum();
        }
    }
    Tensor::new(&[points.len(), c], out)
}

/// Source index pairs and weights for one upsampled axis
/// (half-pixel centres, edge clamped).
fn upsample_axis(n_in: usize, factor: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..n_in * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let l = (src - i0 as f64).clamp(0.0, 1.0);
            (i0, i1, 1.0 - l, l)
        })
        .collect()
}

/// Bilinear upsampling of `[C,H,W]` by an integer factor.
pub fn upsample_bilinear(input: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = check_map(input.shape(), "upsample_bilinear")?;
    if factor == 0 {
        return Err(Error::config("upsample factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let ay = upsample_axis(h, factor);
    let ax = upsample_axis(w, factor);
    let (ho, wo) = (h * factor, w * factor);
    let src = input.data();
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let p = &src[ch * h * w..(ch + 1) * h * w];
        let o = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for (oy, &(y0, y1, wy0, wy1)) in ay.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in ax.iter().enumerate() {
                o[oy * wo + ox] = wy0 * (wx0 * p[y0 * w + x0] + wx1 * p[y0 * w + x1])
                    + wy1 * (wx0 * p[y1 * w + x0] + wx1 * p[y1 * w + x1]);
            }
        }
    }
    Tensor::new(&[c, ho, wo], out)
}

fn upsample_backward(grad: &Tensor, c: usize, h: usize, w: usize, factor: usize) -> Tensor {
    let ay = upsample_axis(h, factor);
    let ax = upsample_axis(w, factor);
    let wo = w * factor;
    let mut gi = vec![0.0; c * h * w];
    let g = grad.data();
    let go_plane = h * factor * wo;
    for ch in 0..c {
        let gp = &mut gi[ch * h * w..(ch + 1) * h * w];
        let go = &g[ch * go_plane..(ch + 1) * go_plane];
        for (oy, &(y0, y1, wy0, wy1)) in ay.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in ax.iter().enumerate() {
                let v = go[oy * wo + ox];
                gp[y0 * w + x0] += wy0 * wx0 * v;
                gp[y0 * w + x1] += wy0 * wx1 * v;
                gp[y1 * w + x0] += wy1 * wx0 * v;
                gp[y1 * w + x1] += wy1 * wx1 * v;
            }
        }
    }
    Tensor::new(&[c, h, w], gi).expect("upsample gradient shape")
}

impl Graph {
    /// Differentiable in both the map and `coords = [x, y]`.
    pub fn bilinear_sample(&mut self, feature: Var, coords: Var) -> Result<Var> {
        if self.shape(coords) != [2] {
            return Err(Error::config("bilinear_sample coords must have shape [2]"));
        }
        let (x, y) = (self.value(coords).data()[0], self.value(coords).data()[1]);
        let out = bilinear_sample(self.value(feature), x, y)?;
        Ok(self.record(out, &[feature, coords], |g, p, _| {
            let f = p[0];
            let (c, h, w) = (f.dim(0), f.dim(1), f.dim(2));
            let (x, y) = (p[1].data()[0], p[1].data()[1]);
            let t = taps(x, y, h, w);
            let plane = h * w;
            let mut gf = vec![0.0; f.len()];
            let (mut gx, mut gy) = (0.0, 0.0);
            for ch in 0..c {
                let go = g.data()[ch];
                let fp = &f.data()[ch * plane..(ch + 1) * plane];
                for i in 0..4 {
                    gf[ch * plane + t.idx[i]] += t.w[i] * go;
                    gx += t.dx[i] * fp[t.idx[i]] * go;
                    gy += t.dy[i] * fp[t.idx[i]] * go;
                }
            }
            vec![Some(f.with_data(gf)), Some(Tensor::from_vec(vec![gx, gy]))]
        }))
    }

    /// Differentiable in the map only; sample points are fixed geometry.
    pub fn bilinear_gather(
        &mut self,
        feature: Var,
        points: Arc<Vec<Option<(f64, f64)>>>,
    ) -> Result<Var> {
        let out = bilinear_gather(self.value(feature), &points)?;
        Ok(self.record(out, &[feature], move |g, p, _| {
            let f = p[0];
            let (c, h, w) = (f.dim(0), f.dim(1), f.dim(2));
            let plane = h * w;
            let mut gf = vec![0.0; f.len()];
            for (n, pt) in points.iter().enumerate() {
                let Some((x, y)) = *pt else { continue };
                let t = taps(x, y, h, w);
                for ch in 0..c {
                    let go = g.data()[n * c + ch];
                    for i in 0..4 {
                        gf[ch * plane + t.idx[i]] += t.w[i] * go;
                    }
                }
            }
            vec![Some(f.with_data(gf))]
        }))
    }

    pub fn upsample_bilinear(&mut self, input: Var, factor: usize) -> Result<Var> {
        let out = upsample_bilinear(self.value(input), factor)?;
        Ok(self.record(out, &[input], move |g, p, _| {
            let s = p[0].shape();
            if factor == 1 {
                return vec![Some(g.clone())];
            }
            vec![Some(upsample_backward(g, s[0], s[1], s[2], factor))]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor {
        // value = 10*y + x on a 4x5 map
        Tensor::new(&[1, 4, 5], (0..20).map(|i| (10 * (i / 5) + i % 5) as f64).collect()).unwrap()
    }

    #[test]
    fn lattice_point_is_exact() {
        let f = ramp();
        assert_eq!(bilinear_sample(&f, 2.0, 3.0).unwrap().data(), &[32.0]);
    }

    #[test]
    fn midpoint_interpolates() {
        let f = Tensor::new(&[1, 1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(bilinear_sample(&f, 0.5, 0.0).unwrap().data(), &[0.5]);
    }

    #[test]
    fn far_outside_is_zero() {
        let f = Tensor::new(&[2, 4, 5], vec![1.0; 40]).unwrap();
        assert_eq!(bilinear_sample(&f, -5.0, -5.0).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(bilinear_sample(&f, f64::NAN, 0.0).unwrap().data(), &[0.0, 0.0]);
        // half a pixel outside blends with the zero border
        assert_eq!(bilinear_sample(&f, -0.5, 1.0).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn upsample_preserves_constants_and_identity() {
        let f = Tensor::full(&[2, 3, 2], 1.5);
        let u = upsample_bilinear(&f, 4).unwrap();
        assert_eq!(u.shape(), &[2, 12, 8]);
        assert!(u.data().iter().all(|&v| (v - 1.5).abs() < 1e-15));
        assert_eq!(upsample_bilinear(&ramp(), 1).unwrap(), ramp());
    }

    #[test]
    fn upsample_x2_interior_values() {
        let f = Tensor::new(&[1, 1, 2], vec![0.0, 4.0]).unwrap();
        let u = upsample_bilinear(&f, 2).unwrap();
        // centres at -0.25, 0.25, 0.75, 1.25 in source pixels (clamped)
        assert_eq!(u.data(), &[0.0, 1.0, 3.0, 4.0, 0.0, 1.0, 3.0, 4.0]);
    }
}
