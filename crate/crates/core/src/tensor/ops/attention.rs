use crate::error::{Error, Result};
use crate::tensor::ops::pointwise::softmax;
use crate::tensor::{Graph, Tensor, Var};

fn check(query: &[usize], keys: &[usize]) -> Result<(usize, usize)> {
    if query.len() != 1 || keys.len() != 2 || keys[1] != query[0] {
        return Err(Error::config(format!(
            "attention_1d: query {query:?} and keys {keys:?} incompatible"
        )));
    }
    Ok((keys[0], keys[1]))
}

/// Scaled dot-product attention weights `softmax(keys · query / sqrt(D))`
/// for a single query over `M` keys.
pub fn attention_1d(query: &Tensor, keys: &Tensor) -> Result<Tensor> {
    let (_, d) = check(query.shape(), keys.shape())?;
    let scale = 1.0 / (d as f64).sqrt();
    let logits: Vec<f64> = keys
        .data()
        .chunks(d)
        .map(|k| scale * k.iter().zip(query.data()).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    softmax(&Tensor::from_vec(logits), 0)
}

impl Graph {
    pub fn attention_1d(&mut self, query: Var, keys: Var) -> Result<Var> {
        let out = attention_1d(self.value(query), self.value(keys))?;
        let (_, d) = check(self.shape(query), self.shape(keys))?;
        let scale = 1.0 / (d as f64).sqrt();
        Ok(self.record(out, &[query, keys], move |g, p, w| {
            let (q, k) = (p[0].data(), p[1].data());
            let (gd, wd) = (g.data(), w.data());
            let dot: f64 = gd.iter().zip(wd).map(|(a, b)| a * b).sum();
            let g_logit: Vec<f64> = gd.iter().zip(wd).map(|(gv, wv)| wv * (gv - dot)).collect();
            let mut gq = vec![0.0; d];
            let mut gk = vec![0.0; k.len()];
            for (m, &gl) in g_logit.iter().enumerate() {
                let row = &k[m * d..(m + 1) * d];
                for j in 0..d {
                    gq[j] += scale * gl * row[j];
                    gk[m * d + j] = scale * gl * q[j];
                }
            }
            vec![Some(p[0].with_data(gq)), Some(p[1].with_data(gk))]
        }))
    }
}
