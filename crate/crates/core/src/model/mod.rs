//! The cooperative detector: per-side feature extraction, the feature
//! compression codec, multi-scale cross attention (feature correction and
//! selection), camera-aware channel masking, voxel fusion, BEV neck, dense
//! head, target assignment and losses.

mod ccm;
mod codec;
mod extractor;
mod head;
mod mca;
pub mod params;
mod pipeline;
mod voxel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ccm::{camera_descriptor, ccm, CAMERA_DESCRIPTOR_LEN};
pub use codec::{fc_compress, fc_decompress, spatial_factor, validate_rates};
pub use extractor::{extract_base, extract_features};
pub use head::{
    assign_targets, decode_and_nms, decode_box, detect_head, encode_box, losses, make_anchors, nms, Anchors,
    DenseDetections, DenseVars, LossBundle, Targets,
};
pub use mca::{mca, mfc, mfs, MfsOutput};
pub use params::{Bindings, Init, ParamSpec, ParamStore};
pub use pipeline::{encode_infrastructure, fuse_and_detect, FusionInputs, StageTrace};
pub use voxel::{bev_reduce, fuse_voxels, fuse_voxels_var};

/// Image-to-feature stride of the finest pyramid level.
pub const BASE_STRIDE: usize = 4;
/// Offsets for a 3×3 deformable kernel.
pub const DCN_KERNEL: usize = 3;

pub const LAMBDA_CLS: f64 = 1.0;
pub const LAMBDA_DIR: f64 = 0.2;
pub const POS_IOU: f64 = 0.6;
pub const NEG_IOU: f64 = 0.45;
pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
pub const SMOOTH_L1_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Veh,
    Inf,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Veh => "veh",
            Side::Inf => "inf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionLevel {
    #[default]
    Voxel,
    Bev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Pyramid channel count C.
    pub channels: usize,
    pub stem_channels: usize,
    /// Number of pyramid scales M.
    pub num_scales: usize,
    /// Voxel feature channels C1; must equal C.
    pub voxel_channels: usize,
    /// BEV channels C2.
    pub bev_channels: usize,
    pub ccm_hidden: usize,
    /// Voxel layers folded into BEV channels; must match the grid.
    pub voxel_z: usize,
    /// Anchor (l, w, h) in m.
    pub anchor_size: [f64; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            stem_channels: 32,
            num_scales: 4,
            voxel_channels: 64,
            bev_channels: 256,
            ccm_hidden: 64,
            voxel_z: 4,
            anchor_size: [4.0, 1.85, 1.6],
        }
    }
}

impl ModelConfig {
    /// Narrow variant that trains in minutes on one CPU core.
    pub fn toy() -> Self {
        Self {
            channels: 16,
            stem_channels: 8,
            voxel_channels: 16,
            bev_channels: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.channels,
            self.stem_channels,
            self.num_scales,
            self.bev_channels,
            self.ccm_hidden,
            self.voxel_z,
        ];
        if positive.contains(&0) {
            return Err(Error::config("model widths and counts must be >= 1"));
        }
        if self.voxel_channels != self.channels {
            return Err(Error::config(format!(
                "voxel channels ({}) must equal pyramid channels ({})",
                self.voxel_channels, self.channels
            )));
        }
        if self.anchor_size.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("anchor sizes must be > 0"));
        }
        Ok(())
    }

    /// Image extents must be divisible by this.
    pub fn image_divisor(&self) -> usize {
        1 << (self.num_scales + 1)
    }

    /// Every parameter except the rate-specific codec.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (c, m) = (self.channels, self.num_scales);
        let mut v = Vec::new();
        for side in [Side::Veh, Side::Inf] {
            let p = side.prefix();
            v.extend(ParamSpec::conv(&format!("{p}.ext.stem"), self.stem_channels, 3, 3, true));
            v.extend(ParamSpec::conv(&format!("{p}.ext.s0"), c, self.stem_channels, 3, true));
            for s in 1..m {
                v.extend(ParamSpec::conv(&format!("{p}.ext.down{s}"), c, c, 3, true));
            }
            for s in 0..m {
                let [w, b] = ParamSpec::conv(&format!("{p}.mfc{s}.off"), 2 * DCN_KERNEL * DCN_KERNEL, c, 3, false);
                v.push(ParamSpec {
                    init: Init::Small(c * 9),
                    ..w
                });
                v.push(b);
                v.push(ParamSpec::new(format!("{p}.mfc{s}.dcn.w"), &[c, c, 3, 3], Init::Relu(c * 9)));
                v.push(ParamSpec::new(format!("{p}.mfc{s}.dcn.b"), &[c], Init::Zero));
                for r in 0..s {
                    v.extend(ParamSpec::conv(&format!("{p}.mfc{s}.up{r}"), c, c, 3, true));
                }
            }
            let h = self.ccm_hidden;
            v.push(ParamSpec::new(format!("{p}.ccm.l1.w"), &[h, CAMERA_DESCRIPTOR_LEN], Init::Relu(CAMERA_DESCRIPTOR_LEN)));
            v.push(ParamSpec::new(format!("{p}.ccm.l1.b"), &[h], Init::Zero));
            v.push(ParamSpec::new(format!("{p}.ccm.l2.w"), &[c, h], Init::Linear(h)));
            v.push(ParamSpec::new(format!("{p}.ccm.l2.b"), &[c], Init::Zero));
            v.push(ParamSpec::new(format!("{p}.ccm.fc3.w"), &[c, c], Init::Relu(c)));
            v.push(ParamSpec::new(format!("{p}.ccm.fc3.b"), &[c], Init::Zero));
            v.push(ParamSpec::new(format!("{p}.ccm.fc4.w"), &[c, c], Init::Linear(c)));
            v.push(ParamSpec::new(format!("{p}.ccm.fc4.b"), &[c], Init::Zero));
        }
        for s in 1..m {
            v.extend(ParamSpec::conv(&format!("fc.pyr{s}"), c, c, 3, true));
        }
        v.push(ParamSpec::new("bev.c3d.w", &[c, c, 3, 3, 3], Init::Relu(c * 27)));
        v.push(ParamSpec::new("bev.c3d.b", &[c], Init::Zero));
        v.extend(ParamSpec::conv("bev.c2d", self.bev_channels, c * self.voxel_z, 3, true));
        v.extend(ParamSpec::conv("head.cls", 1, self.bev_channels, 1, false));
        v.extend(ParamSpec::conv("head.reg", 7, self.bev_channels, 1, false));
        v.extend(ParamSpec::conv("head.dir", 2, self.bev_channels, 1, false));
        v
    }

    /// Codec parameters for one (ccr, scr) pair.
    pub fn codec_specs(&self, ccr: usize, scr: usize) -> Result<Vec<ParamSpec>> {
        let s = spatial_factor(scr)?;
        if ccr == 0 || self.channels % ccr != 0 {
            return Err(Error::config(format!("ccr {ccr} does not divide C = {}", self.channels)));
        }
        let (c, cc) = (self.channels, self.channels / ccr);
        let p = codec::prefix(ccr, scr);
        let (k_sp, _) = codec::spatial_kernel(s);
        let mut v = Vec::new();
        v.extend(ParamSpec::conv(&format!("{p}.ch"), cc, c, 1, false));
        v.extend(ParamSpec::conv(&format!("{p}.sp"), cc, cc, k_sp, false));
        v.extend(ParamSpec::conv(&format!("{p}.up"), cc, cc, 3, false));
        v.extend(ParamSpec::conv(&format!("{p}.unch"), c, cc, 1, false));
        Ok(v)
    }

    /// Fresh parameters for the model and the listed codec rates.
    pub fn init_params(&self, rates: &[(usize, usize)], seed: u64) -> Result<ParamStore> {
        self.validate()?;
        let mut store = ParamStore::from_specs(&self.param_specs(), seed);
        for &(ccr, scr) in rates {
            store.add_specs(&self.codec_specs(ccr, scr)?, seed);
        }
        Ok(store)
    }

    /// Checks a loaded checkpoint against this configuration.
    pub fn check_params(&self, store: &ParamStore, rates: &[(usize, usize)]) -> Result<()> {
        store.check_specs(&self.param_specs())?;
        for &(ccr, scr) in rates {
            store.check_specs(&self.codec_specs(ccr, scr)?)?;
        }
        Ok(())
    }
}

/// `x → relu?(conv(x))` with the `{name}.w` / `{name}.b` parameters.
pub(crate) fn conv_block(
    g: &mut crate::tensor::Graph,
    b: &Bindings,
    name: &str,
    x: crate::tensor::Var,
    stride: usize,
    relu: bool,
) -> Result<crate::tensor::Var> {
    let w = b.var(&format!("{name}.w"))?;
    let bias = b.var(&format!("{name}.b"))?;
    let k = g.shape(w)[2];
    let pad = if stride == 1 { k / 2 } else { (k - 1) / 2 };
    let y = g.conv2d(x, w, Some(bias), stride, pad)?;
    Ok(if relu { g.relu(y) } else { y })
}
