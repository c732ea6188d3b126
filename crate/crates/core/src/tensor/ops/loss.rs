//! Summed detection losses with hand-written gradients. Each op returns a
//! `[1]` tensor; normalisation is left to the caller.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::ops::pointwise::sigmoid;
use crate::tensor::{Graph, Tensor, Var};

pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    let a = x.abs();
    if a < beta {
        0.5 * a * a / beta
    } else {
        a - 0.5 * beta
    }
}

fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

/// `log(sigmoid(x))`, stable for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Sigmoid focal loss of a single logit against a 0/1 target.
pub fn focal(logit: f64, target: f64, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(logit);
    if target > 0.5 {
        -alpha * (1.0 - p).powf(gamma) * log_sigmoid(logit)
    } else {
        -(1.0 - alpha) * p.powf(gamma) * log_sigmoid(-logit)
    }
}

fn focal_grad(logit: f64, target: f64, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(logit);
    if target > 0.5 {
        alpha * (1.0 - p).powf(gamma) * (gamma * p * log_sigmoid(logit) - (1.0 - p))
    } else {
        -(1.0 - alpha) * p.powf(gamma) * (gamma * (1.0 - p) * log_sigmoid(-logit) - p)
    }
}

fn same_len(pred: &Tensor, other: &Tensor, what: &str) -> Result<()> {
    if pred.len() != other.len() {
        return Err(Error::config(format!(
            "{what} has {} elements, prediction has {}",
            other.len(),
            pred.len()
        )));
    }
    Ok(())
}

impl Graph {
    /// `Σ weight · smoothL1(pred − target)`.
    pub fn smooth_l1_sum(
        &mut self,
        pred: Var,
        target: Arc<Tensor>,
        weight: Arc<Tensor>,
        beta: f64,
    ) -> Result<Var> {
        let p = self.value(pred);
        same_len(p, &target, "regression target")?;
        same_len(p, &weight, "regression weight")?;
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .zip(weight.data())
            .map(|((x, t), w)| if *w == 0.0 { 0.0 } else { w * smooth_l1(x - t, beta) })
            .sum();
        Ok(self.record(Tensor::scalar(total), &[pred], move |g, p, _| {
            let go = g.item();
            let d = p[0]
                .data()
                .iter()
                .zip(target.data())
                .zip(weight.data())
                .map(|((x, t), w)| go * w * smooth_l1_grad(x - t, beta))
                .collect();
            vec![Some(p[0].with_data(d))]
        }))
    }

    /// `Σ weight · focal(logit, target)` with 0/1 targets.
    pub fn focal_sum(
        &mut self,
        logits: Var,
        target: Arc<Tensor>,
        weight: Arc<Tensor>,
        alpha: f64,
        gamma: f64,
    ) -> Result<Var> {
        let p = self.value(logits);
        same_len(p, &target, "classification target")?;
        same_len(p, &weight, "classification weight")?;
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .zip(weight.data())
            .map(|((x, t), w)| if *w == 0.0 { 0.0 } else { w * focal(*x, *t, alpha, gamma) })
            .sum();
        Ok(self.record(Tensor::scalar(total), &[logits], move |g, p, _| {
            let go = g.item();
            let d = p[0]
                .data()
                .iter()
                .zip(target.data())
                .zip(weight.data())
                .map(|((x, t), w)| if *w == 0.0 { 0.0 } else { go * w * focal_grad(*x, *t, alpha, gamma) })
                .collect();
            vec![Some(p[0].with_data(d))]
        }))
    }

    /// Softmax cross-entropy over axis 0 of `logits [K, ...]`, one label and
    /// one weight per trailing position.
    pub fn softmax_ce_sum(
        &mut self,
        logits: Var,
        labels: Arc<Vec<usize>>,
        weight: Arc<Vec<f64>>,
    ) -> Result<Var> {
        let t = self.value(logits);
        let k = t.dim(0);
        let n = t.len() / k;
        if labels.len() != n || weight.len() != n || labels.iter().any(|&l| l >= k) {
            return Err(Error::config(format!(
                "softmax_ce: {} labels / {} weights for {n} positions of {k} classes",
                labels.len(),
                weight.len()
            )));
        }
        let d = t.data();
        let log_probs = move |d: &[f64], i: usize| -> Vec<f64> {
            let m = (0..k).map(|c| d[c * n + i]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..k).map(|c| (d[c * n + i] - m).exp()).sum::<f64>().ln() + m;
            (0..k).map(|c| d[c * n + i] - z).collect()
        };
        let total: f64 = (0..n)
            .filter(|&i| weight[i] != 0.0)
            .map(|i| -weight[i] * log_probs(d, i)[labels[i]])
            .sum();
        Ok(self.record(Tensor::scalar(total), &[logits], move |g, p, _| {
            let go = g.item();
            let d = p[0].data();
            let mut out = vec![0.0; d.len()];
            for i in (0..n).filter(|&i| weight[i] != 0.0) {
                let lp = log_probs(d, i);
                for c in 0..k {
                    let y = if c == labels[i] { 1.0 } else { 0.0 };
                    out[c * n + i] = go * weight[i] * (lp[c].exp() - y);
                }
            }
            vec![Some(p[0].with_data(out))]
        }))
    }
}
