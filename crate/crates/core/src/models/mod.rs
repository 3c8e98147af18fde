//! CAN and video encoders, the three fusion designs, and checkpoints.

pub mod config;
pub mod conv3d;
pub mod encoders;
pub mod fusion;
pub mod layers;
pub mod model;

pub use config::{Architecture, CpmConfig, FusionConfig, ModelConfig, VpmConfig, VpmStage};
pub use conv3d::{conv3d_reference, Conv3d, Conv3dGeometry};
pub use encoders::{Cpm, Encoders, Vpm};
pub use fusion::{fuse_concat, Forecaster, SimFcModel, SimLstmModel, SingleHorizonModel};
pub use layers::{Module, ReluPattern};
pub use model::{count_parameters, derive_seed, ModelParameters, Network, TargetScaler};

use crate::error::Result;
use crate::types::{CanWindow, ForecastOutput, Representation, Sample, VideoClip};

pub fn cpm_forward(can: &CanWindow, cpm: &Cpm) -> Result<Vec<f64>> {
    Ok(cpm.forward(can)?.0)
}

/// `r_v` temporal-major, with its `(T_v, C_v)` shape.
pub fn vpm_forward(clip: &VideoClip, vpm: &Vpm) -> Result<(Vec<f64>, (usize, usize))> {
    let (r_v, dims, _) = vpm.forward(clip)?;
    Ok((r_v, dims))
}

pub fn mh_sim_fc_forward(r: &[f64], model: &SimFcModel) -> Result<ForecastOutput> {
    Ok(ForecastOutput {
        values: model.fuse_forward(r)?,
    })
}

pub fn mh_sim_lstm_forward(rep: &Representation, model: &SimLstmModel) -> Result<ForecastOutput> {
    Ok(ForecastOutput {
        values: model.fuse_forward(rep)?,
    })
}

/// Row `j` comes from `models[j]` alone.
pub fn mh_ind_fc_forward(
    clip: &VideoClip,
    can: &CanWindow,
    models: &[SingleHorizonModel],
) -> Result<ForecastOutput> {
    let mut values = Vec::with_capacity(models.len());
    for m in models {
        let sample = Sample {
            clip: clip.clone(),
            can: can.clone(),
            targets: crate::types::HorizonTargets {
                values: Vec::new(),
                horizons_s: Vec::new(),
            },
            anchor_timestamp_ns: clip.end_timestamp_ns,
            segment_id: None,
        };
        values.extend(m.forward(&sample)?);
    }
    Ok(ForecastOutput { values })
}
