//! Deformable 3x3-style convolution: each kernel tap reads the input at its
//! regular position shifted by a per-pixel learned offset.
//!
//! Offsets are `[2·k·k, H, W]`; for tap `t = ky·k + kx`, channel `2t` holds
//! Δx (along W) and channel `2t+1` holds Δy (along H).

use crate::error::{Error, Result};
use crate::tensor::ops::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::ops::sample::{taps, Taps};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug)]
struct DeformDims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
}

fn dims(input: &[usize], kernel: &[usize], offsets: &[usize]) -> Result<DeformDims> {
    if input.len() != 3 {
        return Err(Error::config(format!(
            "deform_conv2d input must be [C,H,W], got {input:?}"
        )));
    }
    if kernel.len() != 4 || kernel[2] != kernel[3] || kernel[2] % 2 == 0 || kernel[1] != input[0] {
        return Err(Error::config(format!(
            "deform_conv2d kernel {kernel:?} incompatible with input {input:?}"
        )));
    }
    let k = kernel[2];
    let want = [2 * k * k, input[1], input[2]];
    if offsets != want {
        return Err(Error::config(format!(
            "deform_conv2d offsets must be {want:?}, got {offsets:?}"
        )));
    }
    Ok(DeformDims {
        c_in: input[0],
        h: input[1],
        w: input[2],
        c_out: kernel[0],
        k,
    })
}

/// Sampling taps for every (kernel tap, output pixel), laid out `[k·k, H·W]`.
fn sample_taps(d: &DeformDims, offsets: &[f64]) -> Vec<Taps> {
    let kk = d.k * d.k;
    let hw = d.h * d.w;
    let pad = (d.k / 2) as f64;
    let mut out = Vec::with_capacity(kk * hw);
    for t in 0..kk {
        let (ky, kx) = ((t / d.k) as f64, (t % d.k) as f64);
        let off_x = &offsets[2 * t * hw..(2 * t + 1) * hw];
        let off_y = &offsets[(2 * t + 1) * hw..(2 * t + 2) * hw];
        for p in 0..hw {
            let (oy, ox) = ((p / d.w) as f64, (p % d.w) as f64);
            let x = ox + kx - pad + off_x[p];
            let y = oy + ky - pad + off_y[p];
            out.push(taps(x, y, d.h, d.w));
        }
    }
    out
}

/// Columns `[C_in·k·k, H·W]` of bilinearly sampled input values.
fn columns(d: &DeformDims, input: &[f64], tp: &[Taps]) -> Vec<f64> {
    let kk = d.k * d.k;
    let hw = d.h * d.w;
    let mut cols = vec![0.0; d.c_in * kk * hw];
    for ci in 0..d.c_in {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for t in 0..kk {
            let row = &mut cols[(ci * kk + t) * hw..(ci * kk + t + 1) * hw];
            for (p, r) in row.iter_mut().enumerate() {
                let s = &tp[t * hw + p];
                *r = s.w[0] * plane[s.idx[0]]
                    + s.w[1] * plane[s.idx[1]]
                    + s.w[2] * plane[s.idx[2]]
                    + s.w[3] * plane[s.idx[3]];
            }
        }
    }
    cols
}

/// Deformable convolution, stride 1, padding `k/2`, no bias.
pub fn deform_conv2d(input: &Tensor, kernel: &Tensor, offsets: &Tensor) -> Result<Tensor> {
    let d = dims(input.shape(), kernel.shape(), offsets.shape())?;
    let tp = sample_taps(&d, offsets.data());
    let cols = columns(&d, input.data(), &tp);
    let hw = d.h * d.w;
    let mut out = vec![0.0; d.c_out * hw];
    gemm_nn(d.c_out, d.c_in * d.k * d.k, hw, kernel.data(), &cols, &mut out);
    Tensor::new(&[d.c_out, d.h, d.w], out)
}

impl Graph {
    pub fn deform_conv2d(&mut self, input: Var, kernel: Var, offsets: Var) -> Result<Var> {
        let out = deform_conv2d(self.value(input), self.value(kernel), self.value(offsets))?;
        let d = dims(self.shape(input), self.shape(kernel), self.shape(offsets))?;
        Ok(self.record(out, &[input, kernel, offsets], move |g, p, _| {
            let (x, ker, off) = (p[0].data(), p[1].data(), p[2].data());
            let kk = d.k * d.k;
            let hw = d.h * d.w;
            let rows = d.c_in * kk;
            let tp = sample_taps(&d, off);
            let cols = columns(&d, x, &tp);

            let mut g_ker = vec![0.0; ker.len()];
            gemm_nt(d.c_out, hw, rows, g.data(), &cols, &mut g_ker);
            let mut g_cols = vec![0.0; rows * hw];
            gemm_tn(d.c_out, rows, hw, ker, g.data(), &mut g_cols);

            let mut g_x = vec![0.0; x.len()];
            let mut g_off = vec![0.0; off.len()];
            for ci in 0..d.c_in {
                let plane = &x[ci * hw..(ci + 1) * hw];
                let g_plane = &mut g_x[ci * hw..(ci + 1) * hw];
                for t in 0..kk {
                    let gc = &g_cols[(ci * kk + t) * hw..(ci * kk + t + 1) * hw];
                    for (pix, &gv) in gc.iter().enumerate() {
                        if gv == 0.0 {
                            continue;
                        }
                        let s = &tp[t * hw + pix];
                        let mut dvx = 0.0;
                        let mut dvy = 0.0;
                        for i in 0..4 {
                            g_plane[s.idx[i]] += s.w[i] * gv;
                            dvx += s.dx[i] * plane[s.idx[i]];
                            dvy += s.dy[i] * plane[s.idx[i]];
                        }
                        g_off[2 * t * hw + pix] += dvx * gv;
                        g_off[(2 * t + 1) * hw + pix] += dvy * gv;
                    }
                }
            }
            vec![
                Some(p[0].with_data(g_x)),
                Some(p[1].with_data(g_ker)),
                Some(p[2].with_data(g_off)),
            ]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops::conv::conv2d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scalar per-tap reference: explicit four-neighbour interpolation.
    fn deform_loops(x: &Tensor, k: &Tensor, off: &Tensor) -> Tensor {
        let (ci, h, w) = (x.dim(0), x.dim(1), x.dim(2));
        let (co, ks) = (k.dim(0), k.dim(2));
        let pad = (ks / 2) as f64;
        let read = |c: usize, yy: isize, xx: isize| -> f64 {
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                0.0
            } else {
                x.at(&[c, yy as usize, xx as usize])
            }
        };
        let mut out = Tensor::zeros(&[co, h, w]);
        for o in 0..co {
            for oy in 0..h {
                for ox in 0..w {
                    let mut s = 0.0;
                    for c in 0..ci {
                        for ky in 0..ks {
                            for kx in 0..ks {
                                let t = ky * ks + kx;
                                let px = ox as f64 + kx as f64 - pad + off.at(&[2 * t, oy, ox]);
                                let py = oy as f64 + ky as f64 - pad + off.at(&[2 * t + 1, oy, ox]);
                                let (x0, y0) = (px.floor(), py.floor());
                                let (ax, ay) = (px - x0, py - y0);
                                let (x0, y0) = (x0 as isize, y0 as isize);
                                let v = (1.0 - ax) * (1.0 - ay) * read(c, y0, x0)
                                    + ax * (1.0 - ay) * read(c, y0, x0 + 1)
                                    + (1.0 - ax) * ay * read(c, y0 + 1, x0)
                                    + ax * ay * read(c, y0 + 1, x0 + 1);
                                s += k.at(&[o, c, ky, kx]) * v;
                            }
                        }
                    }
                    out.set(&[o, oy, ox], s);
                }
            }
        }
        out
    }

    #[test]
    fn zero_offsets_equal_conv2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform(&[3, 6, 7], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[4, 3, 3, 3], -1.0, 1.0, &mut rng);
        let off = Tensor::zeros(&[18, 6, 7]);
        let a = deform_conv2d(&x, &k, &off).unwrap();
        let b = conv2d(&x, &k, None, 1, 1).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn unit_x_offset_shifts_left() {
        let x = Tensor::new(&[1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = Tensor::ones(&[1, 1, 1, 1]);
        let off = Tensor::new(&[2, 2, 3], vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        let y = deform_conv2d(&x, &k, &off).unwrap();
        assert_eq!(y.data(), &[2.0, 3.0, 0.0, 5.0, 6.0, 0.0]);
    }

    #[test]
    fn random_offsets_match_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x = Tensor::uniform(&[2, 5, 6], -1.0, 1.0, &mut rng);
            let k = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut rng);
            let scale = rng.random_range(0.5..3.0);
            let off = Tensor::uniform(&[18, 5, 6], -scale, scale, &mut rng);
            let a = deform_conv2d(&x, &k, &off).unwrap();
            let b = deform_loops(&x, &k, &off);
            assert!(a.max_abs_diff(&b) < 1e-6);
        }
    }

    #[test]
    fn offset_shape_checked() {
        let x = Tensor::zeros(&[1, 4, 4]);
        let k = Tensor::zeros(&[1, 1, 3, 3]);
        let err = deform_conv2d(&x, &k, &Tensor::zeros(&[9, 4, 4])).unwrap_err();
        assert!(err.to_string().contains("offsets"));
    }
}
