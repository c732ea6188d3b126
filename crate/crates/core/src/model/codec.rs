//! Channel and spatial compression of the finest infrastructure map, and
//! the matching decompressor that rebuilds a pyramid on the vehicle side.

use super::{conv_block, Bindings, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

pub(crate) fn prefix(ccr: usize, scr: usize) -> String {
    format!("fc.c{ccr}s{scr}")
}

/// √scr, for perfect squares in `1..=256`.
pub fn spatial_factor(scr: usize) -> Result<usize> {
    let s = (1..=16).find(|s| s * s == scr);
    s.ok_or_else(|| Error::config(format!("scr {scr} is not a perfect square in 1..=256")))
}

/// (kernel, pad) of the stride-`s` spatial compressor; output is exactly
/// `H/s × W/s` when `s` divides the extents.
pub(crate) fn spatial_kernel(s: usize) -> (usize, usize) {
    if s % 2 == 1 {
        (s, 0)
    } else {
        (s + 1, 1)
    }
}

/// Rejects rates the codec cannot realise for `C` channels and an `h1×w1` base map.
pub fn validate_rates(cfg: &ModelConfig, ccr: usize, scr: usize, h1: usize, w1: usize) -> Result<()> {
    if ccr == 0 || !ccr.is_power_of_two() || ccr > 64 || cfg.channels % ccr != 0 {
        return Err(Error::config(format!(
            "ccr {ccr} must be a power of two <= 64 dividing C = {}",
            cfg.channels
        )));
    }
    let s = spatial_factor(scr)?;
    if h1 % s != 0 || w1 % s != 0 {
        return Err(Error::config(format!("√scr = {s} does not divide the {h1}×{w1} base map")));
    }
    Ok(())
}

/// `f0 [C,H1,W1] → fT [C/ccr, H1/√scr, W1/√scr]`.
pub fn fc_compress(g: &mut Graph, b: &Bindings, cfg: &ModelConfig, f0: Var, ccr: usize, scr: usize) -> Result<Var> {
    let shape = g.shape(f0).to_vec();
    if shape.len() != 3 || shape[0] != cfg.channels {
        return Err(Error::config(format!("compressor expects [{}, H, W], got {shape:?}", cfg.channels)));
    }
    validate_rates(cfg, ccr, scr, shape[1], shape[2])?;
    let p = prefix(ccr, scr);
    let x = conv_block(g, b, &format!("{p}.ch"), f0, 1, false)?;
    let s = spatial_factor(scr)?;
    let (_, pad) = spatial_kernel(s);
    let (w, bias) = (b.var(&format!("{p}.sp.w"))?, b.var(&format!("{p}.sp.b"))?);
    g.conv2d(x, w, Some(bias), s, pad)
}

/// Rebuilds the infrastructure pyramid from a received payload.
/// `base_hw` is the expected `(H1, W1)` of the finest map.
pub fn fc_decompress(
    g: &mut Graph,
    b: &Bindings,
    cfg: &ModelConfig,
    ft: Var,
    ccr: usize,
    scr: usize,
    base_hw: (usize, usize),
) -> Result<Vec<Var>> {
    validate_rates(cfg, ccr, scr, base_hw.0, base_hw.1)?;
    let s = spatial_factor(scr)?;
    let want = [cfg.channels / ccr, base_hw.0 / s, base_hw.1 / s];
    if g.shape(ft) != want {
        return Err(Error::protocol(
            "shape",
            format!("payload {:?} does not match rates ccr={ccr} scr={scr} (expected {want:?})", g.shape(ft)),
        ));
    }
    let p = prefix(ccr, scr);
    let up = g.upsample_bilinear(ft, s)?;
    let x = conv_block(g, b, &format!("{p}.up"), up, 1, false)?;
    let f0 = conv_block(g, b, &format!("{p}.unch"), x, 1, false)?;
    let mut maps = vec![f0];
    for m in 1..cfg.num_scales {
        let prev = *maps.last().expect("non-empty");
        maps.push(conv_block(g, b, &format!("fc.pyr{m}"), prev, 2, true)?);
    }
    Ok(maps)
}
