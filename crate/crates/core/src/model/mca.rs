//! Multi-scale cross attention: deformable feature correction per scale,
//! then vehicle-queried attention over infrastructure scales.

use super::{conv_block, Bindings, ModelConfig, Side};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Corrects every scale with a deformable conv and brings it to scale-0 size.
pub fn mfc(g: &mut Graph, b: &Bindings, cfg: &ModelConfig, side: Side, maps: &[Var]) -> Result<Vec<Var>> {
    if maps.len() != cfg.num_scales {
        return Err(Error::config(format!("expected {} scales, got {}", cfg.num_scales, maps.len())));
    }
    let p = side.prefix();
    let mut out = Vec::with_capacity(maps.len());
    for (m, &f) in maps.iter().enumerate() {
        let off = conv_block(g, b, &format!("{p}.mfc{m}.off"), f, 1, false)?;
        let d = g.deform_conv2d(f, b.var(&format!("{p}.mfc{m}.dcn.w"))?, off)?;
        let d = g.bias_add(d, b.var(&format!("{p}.mfc{m}.dcn.b"))?)?;
        let mut x = g.relu(d);
        for r in 0..m {
            let up = g.upsample_bilinear(x, 2)?;
            x = conv_block(g, b, &format!("{p}.mfc{m}.up{r}"), up, 1, true)?;
        }
        out.push(x);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct MfsOutput {
    pub f_veh: Var,
    pub f_inf: Var,
    /// Scale weights ω, one per infrastructure scale.
    pub weights: Var,
}

/// Scale selection on corrected maps.
pub fn mfs(g: &mut Graph, veh_hat: &[Var], inf_hat: &[Var]) -> Result<MfsOutput> {
    if veh_hat.is_empty() || inf_hat.is_empty() {
        return Err(Error::config("scale selection needs at least one scale per side"));
    }
    let f_veh = g.mean_list(veh_hat)?;
    if inf_hat.iter().any(|&v| g.shape(v) != g.shape(f_veh)) {
        return Err(Error::config("vehicle and infrastructure corrected maps differ in shape"));
    }
    let query = g.mean_pool(f_veh);
    let keys: Vec<Var> = inf_hat.iter().map(|&v| g.mean_pool(v)).collect();
    let keys = g.concat(&keys, 0)?;
    let c = g.shape(query)[0];
    let keys = g.reshape(keys, &[inf_hat.len(), c])?;
    let weights = g.attention_1d(query, keys)?;
    let f_inf = g.weighted_sum(inf_hat, weights)?;
    Ok(MfsOutput { f_veh, f_inf, weights })
}

pub fn mca(g: &mut Graph, b: &Bindings, cfg: &ModelConfig, veh: &[Var], inf: &[Var]) -> Result<MfsOutput> {
    if veh.len() != inf.len() {
        return Err(Error::config(format!("pyramid depth mismatch: {} vs {}", veh.len(), inf.len())));
    }
    for (&a, &c) in veh.iter().zip(inf) {
        if g.shape(a)[0] != g.shape(c)[0] {
            return Err(Error::config("pyramids differ in channel count"));
        }
    }
    let veh_hat = mfc(g, b, cfg, Side::Veh, veh)?;
    let inf_hat = mfc(g, b, cfg, Side::Inf, inf)?;
    mfs(g, &veh_hat, &inf_hat)
}
