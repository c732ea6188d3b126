use std::sync::Arc;

use super::{conv_block, Bindings};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Per-voxel mean over the sides that see it; zero where neither does.
pub fn fuse_voxels_var(
    g: &mut Graph,
    v_veh: Var,
    mask_veh: Arc<Vec<bool>>,
    v_inf: Var,
    mask_inf: Arc<Vec<bool>>,
) -> Result<Var> {
    if g.shape(v_veh) != g.shape(v_inf) {
        return Err(Error::config(format!(
            "voxel grids differ: {:?} vs {:?}",
            g.shape(v_veh),
            g.shape(v_inf)
        )));
    }
    g.masked_mean(&[v_veh, v_inf], &[mask_veh, mask_inf])
}

pub fn fuse_voxels(v_veh: &Tensor, mask_veh: &[bool], v_inf: &Tensor, mask_inf: &[bool]) -> Result<Tensor> {
    let mut g = Graph::inference();
    let (a, b) = (g.constant(v_veh.clone()), g.constant(v_inf.clone()));
    let out = fuse_voxels_var(&mut g, a, Arc::new(mask_veh.to_vec()), b, Arc::new(mask_inf.to_vec()))?;
    Ok(g.value(out).clone())
}

/// `[X,Y,Z,C] → [C2,X,Y]`: one 3×3×3 conv, height folded into channels,
/// then a 3×3 conv.
pub fn bev_reduce(g: &mut Graph, b: &Bindings, v: Var) -> Result<Var> {
    let s = g.shape(v).to_vec();
    if s.len() != 4 {
        return Err(Error::config(format!("bev_reduce expects [X,Y,Z,C], got {s:?}")));
    }
    let (x, y, z, c) = (s[0], s[1], s[2], s[3]);
    let t = g.permute(v, &[3, 0, 1, 2])?;
    let t = g.conv3d(t, b.var("bev.c3d.w")?, Some(b.var("bev.c3d.b")?))?;
    let t = g.relu(t);
    let t = g.permute(t, &[0, 3, 1, 2])?;
    let t = g.reshape(t, &[c * z, x, y])?;
    conv_block(g, b, "bev.c2d", t, 1, true)
}
