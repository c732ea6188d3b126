use serde::Serialize;

use super::{derive_seed, run_pipeline, train_from, ScenarioConfig};
use crate::error::Result;
use crate::model::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsOrigin {
    /// No checkpoint given; everything freshly initialised.
    Untrained,
    /// Checkpoint used as is, codec included.
    Shared,
    /// Checkpoint used as is with a freshly initialised codec for this rate.
    SharedNewCodec,
    /// Checkpoint fine-tuned at this rate.
    Finetuned,
}

impl WeightsOrigin {
    pub fn label(self) -> &'static str {
        match self {
            Self::Untrained => "untrained",
            Self::Shared => "shared",
            Self::SharedNewCodec => "shared-new-codec",
            Self::Finetuned => "finetuned",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompressionRow {
    pub ccr: usize,
    pub scr: usize,
    pub total_rate: usize,
    pub ap_3d: Option<f64>,
    pub ap_bev: Option<f64>,
    pub average_byte: f64,
    pub payload_bytes: f64,
    pub weights: WeightsOrigin,
}

/// One evaluation per `(ccr, scr)` pair, rows ordered by `(ccr, scr)`.
pub fn sweep_compression(
    cfg: &ScenarioConfig,
    weights: Option<&ParamStore>,
    ccr_list: &[usize],
    scr_list: &[usize],
) -> Result<Vec<CompressionRow>> {
    let mut pairs: Vec<(usize, usize)> = ccr_list
        .iter()
        .flat_map(|&c| scr_list.iter().map(move |&s| (c, s)))
        .collect();
    pairs.sort_unstable();
    let mut rows = Vec::with_capacity(pairs.len());
    for (ccr, scr) in pairs {
        let mut rc = cfg.clone();
        rc.ccr = ccr;
        rc.scr = scr;
        rc.validate()?;
        let codec = rc.model.codec_specs(ccr, scr)?;
        let (mut w, mut origin) = match weights {
            Some(w) => {
                let fresh = codec.iter().any(|s| !w.contains(&s.name));
                let mut w = w.clone();
                w.add_specs(&codec, rc.seed);
                (w, if fresh { WeightsOrigin::SharedNewCodec } else { WeightsOrigin::Shared })
            }
            None => (rc.model.init_params(&[(ccr, scr)], rc.seed)?, WeightsOrigin::Untrained),
        };
        if rc.sweep.finetune_steps > 0 {
            w = train_from(&rc, w, rc.sweep.finetune_steps, rc.train.lr, rc.seed)?.params;
            origin = WeightsOrigin::Finetuned;
        }
        let res = run_pipeline(&rc, &w)?;
        rows.push(CompressionRow {
            ccr,
            scr,
            total_rate: ccr * scr,
            ap_3d: res.ap_3d[0].ap,
            ap_bev: res.ap_bev[0].ap,
            average_byte: res.average_byte,
            payload_bytes: res.payload_bytes,
            weights: origin,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoseRow {
    pub rot_noise_deg: f64,
    pub seeds: usize,
    pub mean_ap_3d: f64,
    /// Sample standard deviation over seeds.
    pub std_ap_3d: f64,
    pub mean_ap_bev: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean AP per infrastructure rotation-noise level. Seed `s` draws the same
/// scenes and the same noise direction at every level, so levels differ only
/// in noise magnitude.
pub fn sweep_pose_noise(
    cfg: &ScenarioConfig,
    weights: &ParamStore,
    rot_noise_deg: &[f64],
    seeds_per_point: usize,
) -> Result<Vec<PoseRow>> {
    let mut levels = rot_noise_deg.to_vec();
    levels.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(levels.len());
    for level in levels {
        let mut ap3 = Vec::with_capacity(seeds_per_point);
        let mut apb = Vec::with_capacity(seeds_per_point);
        for s in 0..seeds_per_point as u64 {
            let mut rc = cfg.clone();
            rc.rot_noise_deg = level;
            rc.seed = derive_seed(cfg.seed, "pose-sweep", s);
            let res = run_pipeline(&rc, weights)?;
            if let (Some(a), Some(b)) = (res.ap_3d[0].ap, res.ap_bev[0].ap) {
                ap3.push(a);
                apb.push(b);
            }
        }
        let (mean_ap_3d, std_ap_3d) = mean_std(&ap3);
        rows.push(PoseRow {
            rot_noise_deg: level,
            seeds: seeds_per_point,
            mean_ap_3d,
            std_ap_3d,
            mean_ap_bev: mean_std(&apb).0,
        });
    }
    Ok(rows)
}
