//! Activations, elementwise arithmetic, reductions and layout operators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// (outer, axis length, inner) strides for reducing along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::config(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, n, inner) = axis_split(x.shape(), axis)?;
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            let m = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (src[at(j)] - m).exp();
                out[at(j)] = e;
                z += e;
            }
            for j in 0..n {
                out[at(j)] /= z;
            }
        }
    }
    Ok(x.with_data(out))
}

/// Axis permutation: output axis `i` is input axis `axes[i]`.
pub fn permute(x: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let r = x.rank();
    let mut seen = vec![false; r];
    if axes.len() != r || axes.iter().any(|&a| a >= r || std::mem::replace(&mut seen[a], true)) {
        return Err(Error::config(format!(
            "invalid permutation {axes:?} for rank {r}"
        )));
    }
    let in_shape = x.shape();
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let mut in_strides = vec![1usize; r];
    for i in (0..r.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; r];
    let src = x.data();
    for _ in 0..x.len() {
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(src[off]);
        for d in (0..r).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(&out_shape, out)
}

fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::config("concat of an empty list"))?;
    let (outer, _, inner) = axis_split(first.shape(), axis)?;
    for p in parts {
        let ok = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::config(format!(
                "concat shape mismatch: {:?} vs {:?} on axis {axis}",
                p.shape(),
                first.shape()
            )));
        }
    }
    let total: usize = parts.iter().map(|p| p.dim(axis)).sum();
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let block = p.dim(axis) * inner;
            out.extend_from_slice(&p.data()[o * block..(o + 1) * block]);
        }
    }
    Tensor::new(&shape, out)
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn leading_channels(x: &Tensor, c: &Tensor, op: &str) -> Result<(usize, usize)> {
    if c.rank() != 1 || x.dim(0) != c.dim(0) {
        return Err(Error::config(format!(
            "{op}: per-channel vector {:?} does not match leading axis of {:?}",
            c.shape(),
            x.shape()
        )));
    }
    Ok((x.dim(0), x.len() / x.dim(0)))
}

impl Graph {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "add")?;
        let out = ta.with_data(ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect());
        Ok(self.record(out, &[a, b], |g, _, _| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "sub")?;
        let out = ta.with_data(ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect());
        Ok(self.record(out, &[a, b], |g, _, _| vec![Some(g.clone()), Some(g.map(|v| -v))]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "mul")?;
        let out = ta.with_data(ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect());
        Ok(self.record(out, &[a, b], |g, p, _| {
            let ga = g.data().iter().zip(p[1].data()).map(|(g, y)| g * y).collect();
            let gb = g.data().iter().zip(p[0].data()).map(|(g, x)| g * x).collect();
            vec![Some(g.with_data(ga)), Some(g.with_data(gb))]
        }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.record(out, &[a], move |g, _, _| vec![Some(g.map(|v| v * c))])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.record(out, &[a], |g, _, y| {
            let d = g.data().iter().zip(y.data()).map(|(g, s)| g * s * (1.0 - s)).collect();
            vec![Some(g.with_data(d))]
        })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.record(out, &[a], |g, p, _| {
            let d = g
                .data()
                .iter()
                .zip(p[0].data())
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect();
            vec![Some(g.with_data(d))]
        })
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = softmax(self.value(a), axis)?;
        let (outer, n, inner) = axis_split(self.shape(a), axis)?;
        Ok(self.record(out, &[a], move |g, _, y| {
            let (gd, yd) = (g.data(), y.data());
            let mut d = vec![0.0; gd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let dot: f64 = (0..n).map(|j| gd[at(j)] * yd[at(j)]).sum();
                    for j in 0..n {
                        d[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                    }
                }
            }
            vec![Some(g.with_data(d))]
        }))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.record(out, &[a], |g, p, _| vec![Some(Tensor::full(p[0].shape(), g.item()))])
    }

    /// Elementwise mean of same-shaped tensors.
    pub fn mean_list(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::config("mean of an empty list"))?;
        let n = parts.len() as f64;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            same_shape(&acc, t, "mean_list")?;
            acc.accumulate(t);
        }
        let out = acc.map(|v| v / n);
        let k = parts.len();
        Ok(self.record(out, parts, move |g, _, _| {
            let share = g.map(|v| v / n);
            (0..k).map(|_| Some(share.clone())).collect()
        }))
    }

    /// `Σ_m w[m] · parts[m]`, differentiable in both the parts and `w`.
    pub fn weighted_sum(&mut self, parts: &[Var], weights: Var) -> Result<Var> {
        let w = self.value(weights).clone();
        if w.rank() != 1 || w.len() != parts.len() || parts.is_empty() {
            return Err(Error::config(format!(
                "weighted_sum: {} parts but weights {:?}",
                parts.len(),
                w.shape()
            )));
        }
        let first = self.value(parts[0]);
        let mut acc = Tensor::zeros(first.shape());
        for (&p, &wm) in parts.iter().zip(w.data()) {
            let t = self.value(p);
            same_shape(&acc, t, "weighted_sum")?;
            for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += wm * v;
            }
        }
        let mut all = parts.to_vec();
        all.push(weights);
        let k = parts.len();
        Ok(self.record(acc, &all, move |g, p, _| {
            let w = p[k].data();
            let mut out: Vec<Option<Tensor>> =
                (0..k).map(|m| Some(g.map(|v| v * w[m]))).collect();
            let gw: Vec<f64> = (0..k)
                .map(|m| g.data().iter().zip(p[m].data()).map(|(a, b)| a * b).sum())
                .collect();
            out.push(Some(Tensor::from_vec(gw)));
            out
        }))
    }

    /// Mean over all non-leading axes: `[C, ...] -> [C]`.
    pub fn mean_pool(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let c = t.dim(0);
        let per = t.len() / c;
        let out: Vec<f64> = t
            .data()
            .chunks(per)
            .map(|ch| ch.iter().sum::<f64>() / per as f64)
            .collect();
        self.record(Tensor::from_vec(out), &[a], move |g, p, _| {
            let mut d = Vec::with_capacity(p[0].len());
            for &gv in g.data() {
                d.extend(std::iter::repeat_n(gv / per as f64, per));
            }
            vec![Some(p[0].with_data(d))]
        })
    }

    /// `x [C, ...] * m [C]` broadcast over the trailing axes.
    pub fn channel_mul(&mut self, x: Var, m: Var) -> Result<Var> {
        let (tx, tm) = (self.value(x), self.value(m));
        let (_, per) = leading_channels(tx, tm, "channel_mul")?;
        let out: Vec<f64> = tx
            .data()
            .chunks(per)
            .zip(tm.data())
            .flat_map(|(ch, &s)| ch.iter().map(move |v| v * s))
            .collect();
        let out = tx.with_data(out);
        Ok(self.record(out, &[x, m], move |g, p, _| {
            let (xd, md) = (p[0].data(), p[1].data());
            let gx: Vec<f64> = g
                .data()
                .chunks(per)
                .zip(md)
                .flat_map(|(ch, &s)| ch.iter().map(move |v| v * s))
                .collect();
            let gm: Vec<f64> = g
                .data()
                .chunks(per)
                .zip(xd.chunks(per))
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).sum())
                .collect();
            vec![Some(p[0].with_data(gx)), Some(p[1].with_data(gm))]
        }))
    }

    /// `x [C, ...] + b [C]` broadcast over the trailing axes.
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let (_, per) = leading_channels(tx, tb, "bias_add")?;
        let out: Vec<f64> = tx
            .data()
            .chunks(per)
            .zip(tb.data())
            .flat_map(|(ch, &s)| ch.iter().map(move |v| v + s))
            .collect();
        let out = tx.with_data(out);
        Ok(self.record(out, &[x, b], move |g, p, _| {
            let gb: Vec<f64> = g.data().chunks(per).map(|ch| ch.iter().sum()).collect();
            vec![Some(g.clone()), Some(p[1].with_data(gb))]
        }))
    }

    /// Fully connected layer `weight [out, in] · x [in] + bias [out]`.
    pub fn linear(&mut self, weight: Var, x: Var, bias: Var) -> Result<Var> {
        let (tw, tx, tb) = (self.value(weight), self.value(x), self.value(bias));
        if tw.rank() != 2 || tx.shape() != [tw.dim(1)] || tb.shape() != [tw.dim(0)] {
            return Err(Error::config(format!(
                "linear: weight {:?}, input {:?}, bias {:?} incompatible",
                tw.shape(),
                tx.shape(),
                tb.shape()
            )));
        }
        let n_in = tw.dim(1);
        let out: Vec<f64> = tw
            .data()
            .chunks(n_in)
            .zip(tb.data())
            .map(|(row, b)| b + row.iter().zip(tx.data()).map(|(a, v)| a * v).sum::<f64>())
            .collect();
        Ok(self.record(Tensor::from_vec(out), &[weight, x, bias], move |g, p, _| {
            let (w, x) = (p[0].data(), p[1].data());
            let gd = g.data();
            let mut gw = Vec::with_capacity(w.len());
            for &go in gd {
                gw.extend(x.iter().map(|v| go * v));
            }
            let mut gx = vec![0.0; n_in];
            for (row, &go) in w.chunks(n_in).zip(gd) {
                for (a, r) in gx.iter_mut().zip(row) {
                    *a += go * r;
                }
            }
            vec![
                Some(p[0].with_data(gw)),
                Some(p[1].with_data(gx)),
                Some(g.clone()),
            ]
        }))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = concat(&tensors, axis)?;
        let sizes: Vec<usize> = tensors.iter().map(|t| t.dim(axis)).collect();
        let (outer, _, inner) = axis_split(out.shape(), axis)?;
        let total: usize = sizes.iter().sum();
        Ok(self.record(out, parts, move |g, p, _| {
            let mut grads: Vec<Vec<f64>> = p.iter().map(|t| Vec::with_capacity(t.len())).collect();
            for o in 0..outer {
                let mut start = o * total * inner;
                for (k, &s) in sizes.iter().enumerate() {
                    grads[k].extend_from_slice(&g.data()[start..start + s * inner]);
                    start += s * inner;
                }
            }
            grads
                .into_iter()
                .zip(p)
                .map(|(d, t)| Some(t.with_data(d)))
                .collect()
        }))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let out = permute(self.value(a), axes)?;
        let inv = inverse_permutation(axes);
        Ok(self.record(out, &[a], move |g, _, _| {
            vec![Some(permute(g, &inv).expect("inverse permutation"))]
        }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.record(out, &[a], |g, p, _| {
            vec![Some(g.reshape(p[0].shape()).expect("reshape gradient"))]
        }))
    }

    /// Per-row average over the inputs whose row is marked valid; rows valid
    /// nowhere are zero. A row is a run of `last-axis` elements, and each mask
    /// has one entry per row.
    pub fn masked_mean(&mut self, parts: &[Var], masks: &[Arc<Vec<bool>>]) -> Result<Var> {
        if parts.is_empty() || parts.len() != masks.len() {
            return Err(Error::config("masked_mean needs one mask per input"));
        }
        let shape = self.shape(parts[0]).to_vec();
        let row = *shape.last().expect("rank >= 1");
        let rows = self.value(parts[0]).len() / row;
        for (&p, m) in parts.iter().zip(masks) {
            if self.shape(p) != shape.as_slice() || m.len() != rows {
                return Err(Error::config(format!(
                    "masked_mean: input {:?} / mask {} vs {shape:?} / {rows}",
                    self.shape(p),
                    m.len()
                )));
            }
        }
        let weights: Arc<Vec<Vec<f64>>> = Arc::new({
            let counts: Vec<usize> = (0..rows)
                .map(|r| masks.iter().filter(|m| m[r]).count())
                .collect();
            masks
                .iter()
                .map(|m| {
                    (0..rows)
                        .map(|r| if m[r] { 1.0 / counts[r] as f64 } else { 0.0 })
                        .collect()
                })
                .collect()
        });
        let mut out = vec![0.0; rows * row];
        for (&p, w) in parts.iter().zip(weights.iter()) {
            let d = self.value(p).data();
            for r in 0..rows {
                if w[r] == 0.0 {
                    continue;
                }
                for i in r * row..(r + 1) * row {
                    out[i] += w[r] * d[i];
                }
            }
        }
        let out = Tensor::new(&shape, out)?;
        Ok(self.record(out, parts, move |g, _, _| {
            weights
                .iter()
                .map(|w| {
                    let d: Vec<f64> = g
                        .data()
                        .chunks(row)
                        .zip(w)
                        .flat_map(|(ch, &s)| ch.iter().map(move |v| v * s))
                        .collect();
                    Some(g.with_data(d))
                })
                .collect()
        }))
    }
}
