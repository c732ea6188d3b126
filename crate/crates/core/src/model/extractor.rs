use super::{conv_block, Bindings, ModelConfig, Side};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

fn check_image(g: &Graph, cfg: &ModelConfig, image: Var) -> Result<()> {
    let s = g.shape(image);
    let d = cfg.image_divisor();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::config(format!("expected a [3,H,W] image, got {s:?}")));
    }
    if s[1] % d != 0 || s[2] % d != 0 {
        return Err(Error::config(format!(
            "image {}×{} not divisible by {d} for {} scales",
            s[1], s[2], cfg.num_scales
        )));
    }
    Ok(())
}

/// Finest map `f0` at stride 4.
pub fn extract_base(g: &mut Graph, b: &Bindings, cfg: &ModelConfig, image: Var, side: Side) -> Result<Var> {
    check_image(g, cfg, image)?;
    let p = side.prefix();
    let x = conv_block(g, b, &format!("{p}.ext.stem"), image, 2, true)?;
    conv_block(g, b, &format!("{p}.ext.s0"), x, 2, true)
}

/// Pyramid at strides 4, 8, …, 2^(M+1).
pub fn extract_features(g: &mut Graph, b: &Bindings, cfg: &ModelConfig, image: Var, side: Side) -> Result<Vec<Var>> {
    let mut maps = vec![extract_base(g, b, cfg, image, side)?];
    for s in 1..cfg.num_scales {
        let prev = *maps.last().expect("non-empty");
        maps.push(conv_block(g, b, &format!("{}.ext.down{s}", side.prefix()), prev, 2, true)?);
    }
    Ok(maps)
}
