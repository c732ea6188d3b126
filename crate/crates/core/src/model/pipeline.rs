//! Composition of the stages in transmission order. The infrastructure half
//! ends at the compressed payload so that the caller can put it on the wire.

use super::{
    bev_reduce, ccm, detect_head, extract_base, extract_features, fc_compress, fc_decompress, fuse_voxels_var, mca,
    Bindings, DenseVars, FusionLevel, ModelConfig, Side, BASE_STRIDE,
};
use crate::error::{Error, Result, StageExt};
use crate::geometry::{sample_voxel_features_var, CameraParams, VoxelGridSpec};
use crate::tensor::{Graph, Var};

/// Output shape of every stage, in execution order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTrace {
    pub stages: Vec<(String, Vec<usize>)>,
}

impl StageTrace {
    pub fn record(&mut self, stage: &str, shape: &[usize]) {
        self.stages.push((stage.to_string(), shape.to_vec()));
    }

    pub fn names(&self) -> Vec<&str> {
        self.stages.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Infrastructure side: image → `f0` → compressed payload `fT`.
pub fn encode_infrastructure(
    g: &mut Graph,
    b: &Bindings,
    cfg: &ModelConfig,
    image_inf: Var,
    ccr: usize,
    scr: usize,
    trace: &mut StageTrace,
) -> Result<Var> {
    let f0 = extract_base(g, b, cfg, image_inf, Side::Inf).stage("extract_inf")?;
    trace.record("extract_inf", g.shape(f0));
    let ft = fc_compress(g, b, cfg, f0, ccr, scr).stage("fc_compress")?;
    trace.record("fc_compress", g.shape(ft));
    Ok(ft)
}

pub struct FusionInputs<'a> {
    pub image_veh: Var,
    pub cam_veh: &'a CameraParams,
    /// Received payload.
    pub ft_inf: Var,
    /// Calibration as received with the payload.
    pub cam_inf: &'a CameraParams,
    pub ccr: usize,
    pub scr: usize,
    pub grid: &'a VoxelGridSpec,
    pub fusion: FusionLevel,
}

/// Vehicle side: decode, align, mask, lift to voxels, fuse and detect.
pub fn fuse_and_detect(
    g: &mut Graph,
    b: &Bindings,
    cfg: &ModelConfig,
    inp: &FusionInputs,
    trace: &mut StageTrace,
) -> Result<DenseVars> {
    if inp.grid.counts[2] != cfg.voxel_z {
        return Err(Error::config(format!(
            "grid has {} height layers, model folds {}",
            inp.grid.counts[2], cfg.voxel_z
        )));
    }
    let veh = extract_features(g, b, cfg, inp.image_veh, Side::Veh).stage("extract_veh")?;
    trace.record("extract_veh", g.shape(veh[0]));
    let base = g.shape(veh[0]).to_vec();
    let inf = fc_decompress(g, b, cfg, inp.ft_inf, inp.ccr, inp.scr, (base[1], base[2])).stage("fc_decompress")?;
    trace.record("fc_decompress", g.shape(inf[0]));

    let sel = mca(g, b, cfg, &veh, &inf).stage("mca")?;
    trace.record("mca", g.shape(sel.f_inf));
    let (f_veh, _) = ccm(g, b, Side::Veh, sel.f_veh, inp.cam_veh).stage("ccm")?;
    let (f_inf, _) = ccm(g, b, Side::Inf, sel.f_inf, inp.cam_inf).stage("ccm")?;
    trace.record("ccm", g.shape(f_inf));

    let (v_veh, m_veh) =
        sample_voxel_features_var(g, f_veh, inp.cam_veh, inp.grid, BASE_STRIDE).stage("sample_voxel_features")?;
    let (v_inf, m_inf) =
        sample_voxel_features_var(g, f_inf, inp.cam_inf, inp.grid, BASE_STRIDE).stage("sample_voxel_features")?;
    trace.record("sample_voxel_features", g.shape(v_inf));

    let bev = match inp.fusion {
        FusionLevel::Voxel => {
            let v = fuse_voxels_var(g, v_veh, m_veh, v_inf, m_inf).stage("fuse_voxels")?;
            trace.record("fuse_voxels", g.shape(v));
            bev_reduce(g, b, v).stage("bev_reduce")?
        }
        FusionLevel::Bev => {
            let bv = bev_reduce(g, b, v_veh).stage("bev_reduce")?;
            let bi = bev_reduce(g, b, v_inf).stage("bev_reduce")?;
            let fused = g.mean_list(&[bv, bi]).stage("fuse_bev")?;
            trace.record("fuse_bev", g.shape(fused));
            fused
        }
    };
    trace.record("bev_reduce", g.shape(bev));
    let dense = detect_head(g, b, bev).stage("detect_head")?;
    trace.record("detect_head", g.shape(dense.reg));
    Ok(dense)
}
