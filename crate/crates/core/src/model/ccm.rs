//! Camera-aware channel masking.

use super::{Bindings, Side};
use crate::error::Result;
use crate::geometry::CameraParams;
use crate::tensor::{Graph, Tensor, Var};

pub const CAMERA_DESCRIPTOR_LEN: usize = 21;

/// `R ⊕ t/10 ⊕ K/100`; fixed scaling keeps every entry near unit range.
pub fn camera_descriptor(cam: &CameraParams) -> Tensor {
    let mut flat = cam.flatten();
    for v in &mut flat[9..12] {
        *v /= 10.0;
    }
    for v in &mut flat[12..21] {
        *v /= 100.0;
    }
    Tensor::from_vec(flat.to_vec())
}

/// Returns the masked map and the mask.
pub fn ccm(g: &mut Graph, b: &Bindings, side: Side, f: Var, cam: &CameraParams) -> Result<(Var, Var)> {
    let p = side.prefix();
    let layer = |g: &mut Graph, name: &str, x: Var| -> Result<Var> {
        let w = b.var(&format!("{p}.ccm.{name}.w"))?;
        let bias = b.var(&format!("{p}.ccm.{name}.b"))?;
        g.linear(w, x, bias)
    };
    let xi = g.constant(camera_descriptor(cam));
    let h = layer(g, "l1", xi)?;
    let h = g.relu(h);
    let h = layer(g, "l2", h)?;
    let h = layer(g, "fc3", h)?;
    let h = g.relu(h);
    let h = layer(g, "fc4", h)?;
    let mask = g.sigmoid(h);
    Ok((g.channel_mul(f, mask)?, mask))
}
