//! Dense 2D and 3D convolution (cross-correlation, zero padding).

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Output index range `[lo, hi)` such that `o * stride + offset` stays inside
/// `[0, n_in)`.
pub(crate) fn valid_range(n_out: usize, n_in: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi_excl = (n_in as isize - offset + s - 1) / s;
    let hi = hi_excl.clamp(0, n_out as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

#[derive(Clone, Copy, Debug)]
struct Conv2dDims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

fn conv2d_dims(
    input: &[usize],
    kernel: &[usize],
    bias: Option<&[usize]>,
    stride: usize,
    pad: usize,
) -> Result<Conv2dDims> {
    if input.len() != 3 {
        return Err(Error::config(format!("conv2d input must be [C,H,W], got {input:?}")));
    }
    if kernel.len() != 4 || kernel[2] != kernel[3] {
        return Err(Error::config(format!(
            "conv2d kernel must be [Co,Ci,k,k], got {kernel:?}"
        )));
    }
    let (c_in, h, w) = (input[0], input[1], input[2]);
    let (c_out, k) = (kernel[0], kernel[2]);
    if kernel[1] != c_in {
        return Err(Error::config(format!(
            "conv2d kernel expects {} input channels, input has {c_in}",
            kernel[1]
        )));
    }
    if k % 2 == 0 {
        return Err(Error::config(format!("conv2d kernel size {k} must be odd")));
    }
    if stride == 0 {
        return Err(Error::config("conv2d stride must be >= 1"));
    }
    if let Some(b) = bias {
        if b != [c_out] {
            return Err(Error::config(format!(
                "conv2d bias must be [{c_out}], got {b:?}"
            )));
        }
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::config(format!(
            "conv2d kernel {k} larger than padded input {h}x{w} (pad {pad})"
        )));
    }
    let h_out = (h + 2 * pad - k) / stride + 1;
    let w_out = (w + 2 * pad - k) / stride + 1;
    Ok(Conv2dDims {
        c_in,
        h,
        w,
        c_out,
        k,
        stride,
        pad,
        h_out,
        w_out,
    })
}

fn conv2d_forward(d: &Conv2dDims, input: &[f64], kernel: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let plane_out = d.h_out * d.w_out;
    let mut out = vec![0.0; d.c_out * plane_out];
    for co in 0..d.c_out {
        let out_plane = &mut out[co * plane_out..(co + 1) * plane_out];
        if let Some(b) = bias {
            out_plane.fill(b[co]);
        }
        for ci in 0..d.c_in {
            let in_plane = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.k {
                let oy_off = ky as isize - d.pad as isize;
                let (oy_lo, oy_hi) = valid_range(d.h_out, d.h, d.stride, oy_off);
                for kx in 0..d.k {
                    let wv = kernel[((co * d.c_in + ci) * d.k + ky) * d.k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let ox_off = kx as isize - d.pad as isize;
                    let (ox_lo, ox_hi) = valid_range(d.w_out, d.w, d.stride, ox_off);
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * d.stride) as isize + oy_off;
                        let in_row = &in_plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                        let out_row = &mut out_plane[oy * d.w_out..(oy + 1) * d.w_out];
                        if d.stride == 1 {
                            let start = (ox_lo as isize + ox_off) as usize;
                            let src = &in_row[start..start + (ox_hi - ox_lo)];
                            for (o, &i) in out_row[ox_lo..ox_hi].iter_mut().zip(src) {
                                *o += wv * i;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ((ox * d.stride) as isize + ox_off) as usize;
                                out_row[ox] += wv * in_row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

struct Conv2dGrads {
    input: Option<Vec<f64>>,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

fn conv2d_backward(
    d: &Conv2dDims,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    want_input: bool,
) -> Conv2dGrads {
    let plane_out = d.h_out * d.w_out;
    let mut g_in = want_input.then(|| vec![0.0; input.len()]);
    let mut g_k = vec![0.0; kernel.len()];
    let mut g_b = vec![0.0; d.c_out];
    for co in 0..d.c_out {
        let go_plane = &grad_out[co * plane_out..(co + 1) * plane_out];
        g_b[co] = go_plane.iter().sum();
        for ci in 0..d.c_in {
            let in_off = ci * d.h * d.w;
            for ky in 0..d.k {
                let oy_off = ky as isize - d.pad as isize;
                let (oy_lo, oy_hi) = valid_range(d.h_out, d.h, d.stride, oy_off);
                for kx in 0..d.k {
                    let widx = ((co * d.c_in + ci) * d.k + ky) * d.k + kx;
                    let wv = kernel[widx];
                    let ox_off = kx as isize - d.pad as isize;
                    let (ox_lo, ox_hi) = valid_range(d.w_out, d.w, d.stride, ox_off);
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = ((oy * d.stride) as isize + oy_off) as usize;
                        let row = in_off + iy * d.w;
                        let go_row = &go_plane[oy * d.w_out..(oy + 1) * d.w_out];
                        for ox in ox_lo..ox_hi {
                            let ix = ((ox * d.stride) as isize + ox_off) as usize;
                            acc += go_row[ox] * input[row + ix];
                            if let Some(gi) = g_in.as_mut() {
                                gi[row + ix] += wv * go_row[ox];
                            }
                        }
                    }
                    g_k[widx] += acc;
                }
            }
        }
    }
    Conv2dGrads {
        input: g_in,
        kernel: g_k,
        bias: g_b,
    }
}

/// 2D cross-correlation of `input [C_in,H,W]` with `kernel [C_out,C_in,k,k]`.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let d = conv2d_dims(
        input.shape(),
        kernel.shape(),
        bias.map(|b| b.shape()),
        stride,
        pad,
    )?;
    let out = conv2d_forward(&d, input.data(), kernel.data(), bias.map(|b| b.data()));
    Tensor::new(&[d.c_out, d.h_out, d.w_out], out)
}

#[derive(Clone, Copy, Debug)]
struct Conv3dDims {
    c_in: usize,
    dims: [usize; 3],
    c_out: usize,
    k: usize,
}

fn conv3d_dims(input: &[usize], kernel: &[usize], bias: Option<&[usize]>) -> Result<Conv3dDims> {
    if input.len() != 4 {
        return Err(Error::config(format!(
            "conv3d input must be [C,X,Y,Z], got {input:?}"
        )));
    }
    if kernel.len() != 5 || kernel[2] != kernel[3] || kernel[3] != kernel[4] || kernel[2] % 2 == 0 {
        return Err(Error::config(format!(
            "conv3d kernel must be [Co,Ci,k,k,k] with odd k, got {kernel:?}"
        )));
    }
    if kernel[1] != input[0] {
        return Err(Error::config(format!(
            "conv3d kernel expects {} input channels, input has {}",
            kernel[1], input[0]
        )));
    }
    if let Some(b) = bias {
        if b != [kernel[0]] {
            return Err(Error::config(format!("conv3d bias must be [{}]", kernel[0])));
        }
    }
    Ok(Conv3dDims {
        c_in: input[0],
        dims: [input[1], input[2], input[3]],
        c_out: kernel[0],
        k: kernel[2],
    })
}

/// Visits every (output voxel row, input voxel row) pair touched by kernel tap
/// `(kx,ky,kz)` with stride 1 and `k/2` padding. Calls
/// `f(out_offset, in_offset, len)` for contiguous runs along z.
fn conv3d_taps(d: &Conv3dDims, kx: usize, ky: usize, kz: usize, mut f: impl FnMut(usize, usize, usize)) {
    let p = (d.k / 2) as isize;
    let [nx, ny, nz] = d.dims;
    let (x_lo, x_hi) = valid_range(nx, nx, 1, kx as isize - p);
    let (y_lo, y_hi) = valid_range(ny, ny, 1, ky as isize - p);
    let (z_lo, z_hi) = valid_range(nz, nz, 1, kz as isize - p);
    if z_lo >= z_hi {
        return;
    }
    for x in x_lo..x_hi {
        let ix = (x as isize + kx as isize - p) as usize;
        for y in y_lo..y_hi {
            let iy = (y as isize + ky as isize - p) as usize;
            let iz = (z_lo as isize + kz as isize - p) as usize;
            f((x * ny + y) * nz + z_lo, (ix * ny + iy) * nz + iz, z_hi - z_lo);
        }
    }
}

/// Same-size 3D cross-correlation of `input [C_in,X,Y,Z]` with
/// `kernel [C_out,C_in,k,k,k]`, stride 1, padding `k/2`.
pub fn conv3d(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let d = conv3d_dims(input.shape(), kernel.shape(), bias.map(|b| b.shape()))?;
    let vol: usize = d.dims.iter().product();
    let mut out = vec![0.0; d.c_out * vol];
    let (inp, ker) = (input.data(), kernel.data());
    for co in 0..d.c_out {
        let out_v = &mut out[co * vol..(co + 1) * vol];
        if let Some(b) = bias {
            out_v.fill(b.data()[co]);
        }
        for ci in 0..d.c_in {
            let in_v = &inp[ci * vol..(ci + 1) * vol];
            for kx in 0..d.k {
                for ky in 0..d.k {
                    for kz in 0..d.k {
                        let wv = ker[(((co * d.c_in + ci) * d.k + kx) * d.k + ky) * d.k + kz];
                        if wv == 0.0 {
                            continue;
                        }
                        conv3d_taps(&d, kx, ky, kz, |o, i, n| {
                            for (a, b) in out_v[o..o + n].iter_mut().zip(&in_v[i..i + n]) {
                                *a += wv * b;
                            }
                        });
                    }
                }
            }
        }
    }
    Tensor::new(&[d.c_out, d.dims[0], d.dims[1], d.dims[2]], out)
}

fn conv3d_backward(
    d: &Conv3dDims,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    want_input: bool,
) -> Conv2dGrads {
    let vol: usize = d.dims.iter().product();
    let mut g_in = want_input.then(|| vec![0.0; input.len()]);
    let mut g_k = vec![0.0; kernel.len()];
    let mut g_b = vec![0.0; d.c_out];
    for co in 0..d.c_out {
        let go = &grad_out[co * vol..(co + 1) * vol];
        g_b[co] = go.iter().sum();
        for ci in 0..d.c_in {
            let in_v = &input[ci * vol..(ci + 1) * vol];
            for kx in 0..d.k {
                for ky in 0..d.k {
                    for kz in 0..d.k {
                        let widx = (((co * d.c_in + ci) * d.k + kx) * d.k + ky) * d.k + kz;
                        let wv = kernel[widx];
                        let mut acc = 0.0;
                        conv3d_taps(d, kx, ky, kz, |o, i, n| {
                            for (g, x) in go[o..o + n].iter().zip(&in_v[i..i + n]) {
                                acc += g * x;
                            }
                            if let Some(gi) = g_in.as_mut() {
                                let gi = &mut gi[ci * vol..(ci + 1) * vol];
                                for (a, g) in gi[i..i + n].iter_mut().zip(&go[o..o + n]) {
                                    *a += wv * g;
                                }
                            }
                        });
                        g_k[widx] += acc;
                    }
                }
            }
        }
    }
    Conv2dGrads {
        input: g_in,
        kernel: g_k,
        bias: g_b,
    }
}

impl Graph {
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let b = bias.map(|b| self.value(b));
        let out = conv2d(self.value(input), self.value(kernel), b, stride, pad)?;
        let d = conv2d_dims(
            self.shape(input),
            self.shape(kernel),
            None,
            stride,
            pad,
        )?;
        let want_input = self.requires_grad(input);
        let mut parents = vec![input, kernel];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.record(out, &parents, move |g, p, _| {
            let grads = conv2d_backward(&d, p[0].data(), p[1].data(), g.data(), want_input);
            let mut v = vec![
                grads.input.map(|gi| p[0].with_data(gi)),
                Some(p[1].with_data(grads.kernel)),
            ];
            if has_bias {
                v.push(Some(p[2].with_data(grads.bias)));
            }
            v
        }))
    }

    pub fn conv3d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let b = bias.map(|b| self.value(b));
        let out = conv3d(self.value(input), self.value(kernel), b)?;
        let d = conv3d_dims(self.shape(input), self.shape(kernel), None)?;
        let want_input = self.requires_grad(input);
        let mut parents = vec![input, kernel];
        parents.extend(bias);
        let has_bias = bias.is_some();
        Ok(self.record(out, &parents, move |g, p, _| {
            let grads = conv3d_backward(&d, p[0].data(), p[1].data(), g.data(), want_input);
            let mut v = vec![
                grads.input.map(|gi| p[0].with_data(gi)),
                Some(p[1].with_data(grads.kernel)),
            ];
            if has_bias {
                v.push(Some(p[2].with_data(grads.bias)));
            }
            v
        }))
    }
}
