use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::conv3d::Conv3dGeometry;
use crate::models::layers::conv_out_len;
use crate::types::{fingerprint_of, InputSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// One independent model per horizon.
    MhIndFc,
    /// One joint model, fully-connected fusion heads.
    MhSimFc,
    /// One joint model, sequence-to-sequence LSTM fusion.
    MhSimLstm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::MhIndFc,
        Architecture::MhSimFc,
        Architecture::MhSimLstm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::MhIndFc => "mh-ind-fc",
            Architecture::MhSimFc => "mh-sim-fc",
            Architecture::MhSimLstm => "mh-sim-lstm",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mh-ind-fc" => Ok(Architecture::MhIndFc),
            "mh-sim-fc" => Ok(Architecture::MhSimFc),
            "mh-sim-lstm" => Ok(Architecture::MhSimLstm),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected mh-ind-fc, mh-sim-fc or mh-sim-lstm)"
            ))),
        }
    }
}

/// CAN encoder: a stack of strided 1D convolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmConfig {
    /// Channel progression including the 2 input signals.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for CpmConfig {
    fn default() -> Self {
        CpmConfig {
            channels: vec![2, 4, 8, 16],
            kernel_size: 3,
            stride: 2,
            padding: 1,
        }
    }
}

impl CpmConfig {
    /// Temporal length after each layer, starting with `k_in`.
    pub fn temporal_trace(&self, k_in: usize) -> Vec<usize> {
        let mut trace = vec![k_in];
        for _ in 1..self.channels.len() {
            let len = *trace.last().unwrap();
            trace.push(conv_out_len(len, self.kernel_size, self.stride, self.padding));
        }
        trace
    }

    pub fn output_len(&self, k_in: usize) -> usize {
        self.channels.last().copied().unwrap_or(0) * self.temporal_trace(k_in).last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VpmStage {
    pub out_channels: usize,
    pub geometry: Conv3dGeometry,
}

/// Video encoder: 3D-conv stages (ReLU after each) then spatial global
/// average pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpmConfig {
    pub stages: Vec<VpmStage>,
}

impl VpmConfig {
    /// Full-width backbone producing `(5, 768)` from `(3, 10, 224, 224)`.
    pub fn full() -> Self {
        VpmConfig {
            stages: vec![
                VpmStage {
                    out_channels: 16,
                    geometry: Conv3dGeometry {
                        kernel: [1, 4, 4],
                        stride: [1, 4, 4],
                        padding: [0, 0, 0],
                    },
                },
                VpmStage {
                    out_channels: 32,
                    geometry: Conv3dGeometry::cube(3, 2, 1),
                },
                VpmStage {
                    out_channels: 64,
                    geometry: Conv3dGeometry {
                        kernel: [3, 3, 3],
                        stride: [1, 2, 2],
                        padding: [1, 1, 1],
                    },
                },
                VpmStage {
                    out_channels: 768,
                    geometry: Conv3dGeometry::cube(1, 1, 0),
                },
            ],
        }
    }

    /// Reduced backbone for small frames; `channels_out` sets `C_v`.
    pub fn desk(channels_out: usize) -> Self {
        VpmConfig {
            stages: vec![
                VpmStage {
                    out_channels: 8,
                    geometry: Conv3dGeometry {
                        kernel: [3, 3, 3],
                        stride: [1, 2, 2],
                        padding: [1, 1, 1],
                    },
                },
                VpmStage {
                    out_channels: 16,
                    geometry: Conv3dGeometry::cube(3, 2, 1),
                },
                VpmStage {
                    out_channels: channels_out,
                    geometry: Conv3dGeometry::cube(1, 1, 0),
                },
            ],
        }
    }

    pub fn channels_out(&self) -> usize {
        self.stages.last().map_or(3, |s| s.out_channels)
    }

    /// `(C, T, H, W)` after each stage, starting from the clip shape.
    pub fn shape_trace(&self, input: &InputSpec) -> Result<Vec<[usize; 4]>> {
        let mut dims = [3, input.n_frames, input.frame_height, input.frame_width];
        let mut trace = vec![dims];
        for (i, stage) in self.stages.iter().enumerate() {
            let [t, h, w] = stage
                .geometry
                .output_dims([dims[1], dims[2], dims[3]])
                .ok_or_else(|| Error::Config(format!("VPM stage {i} does not fit input {dims:?}")))?;
            dims = [stage.out_channels, t, h, w];
            trace.push(dims);
        }
        Ok(trace)
    }

    pub fn temporal_out(&self, input: &InputSpec) -> Result<usize> {
        Ok(self.shape_trace(input)?.last().unwrap()[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Hidden widths of each single-output head of MH-IND-FC.
    pub ind_fc_hidden: Vec<usize>,
    /// Hidden widths of each `k_out`-output head of MH-SIM-FC.
    pub sim_fc_hidden: Vec<usize>,
    /// Per-step reduction width of MH-SIM-LSTM.
    pub lstm_reduce: usize,
    pub lstm_hidden: Vec<usize>,
    /// Hidden widths of the per-step decoder (output width is 2).
    pub decoder_hidden: Vec<usize>,
}

impl FusionConfig {
    pub fn full() -> Self {
        FusionConfig {
            ind_fc_hidden: vec![246, 15],
            sim_fc_hidden: vec![421, 45],
            lstm_reduce: 400,
            lstm_hidden: vec![64, 32],
            decoder_hidden: vec![16],
        }
    }

    pub fn desk() -> Self {
        FusionConfig {
            ind_fc_hidden: vec![32, 8],
            sim_fc_hidden: vec![64, 16],
            lstm_reduce: 48,
            lstm_hidden: vec![64, 32],
            decoder_hidden: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input: InputSpec,
    pub cpm: CpmConfig,
    pub vpm: VpmConfig,
    pub fusion: FusionConfig,
    /// When false the video encoder is omitted entirely (MH-SIM-LSTM only).
    pub use_vision: bool,
}

impl ModelConfig {
    /// Full-size dimensions: 224×224 frames, `C_v = 768`.
    pub fn full(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            input: InputSpec::default(),
            cpm: CpmConfig::default(),
            vpm: VpmConfig::full(),
            fusion: FusionConfig::full(),
            use_vision: true,
        }
    }

    /// Desk dimensions: 32×32 frames, `C_v = 64`.
    pub fn desk(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            input: InputSpec {
                frame_height: 32,
                frame_width: 32,
                ..InputSpec::default()
            },
            cpm: CpmConfig::default(),
            vpm: VpmConfig::desk(64),
            fusion: FusionConfig::desk(),
            use_vision: true,
        }
    }

    pub fn r_c_len(&self) -> usize {
        self.cpm.output_len(self.input.k_in)
    }

    /// `(T_v, C_v)`, or `(0, 0)` without vision.
    pub fn r_v_dims(&self) -> Result<(usize, usize)> {
        if !self.use_vision {
            return Ok((0, 0));
        }
        Ok((self.vpm.temporal_out(&self.input)?, self.vpm.channels_out()))
    }

    /// Width of the flattened `[r_c, r_v]` vector.
    pub fn fused_len(&self) -> Result<usize> {
        let (t, c) = self.r_v_dims()?;
        Ok(self.r_c_len() + t * c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cpm.channels.first() != Some(&2) {
            return Err(Error::Config("CPM must start from 2 input channels".into()));
        }
        if self.input.k_out == 0 || self.input.k_in == 0 || self.input.n_frames == 0 {
            return Err(Error::Config("k_in, n_frames and k_out must be positive".into()));
        }
        if *self.cpm.temporal_trace(self.input.k_in).last().unwrap() == 0 {
            return Err(Error::Config("CPM collapses the CAN window to zero length".into()));
        }
        let (t_v, _) = self.r_v_dims()?;
        if !self.use_vision && self.architecture != Architecture::MhSimLstm {
            return Err(Error::Config(
                "vision can only be disabled for mh-sim-lstm".into(),
            ));
        }
        if self.architecture == Architecture::MhSimLstm && self.use_vision && t_v != self.input.k_out {
            return Err(Error::Config(format!(
                "mh-sim-lstm decodes one horizon per temporal step: T_v = {t_v} but k_out = {}",
                self.input.k_out
            )));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        fingerprint_of(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpm_trace_and_width_at_defaults() {
        let cpm = CpmConfig::default();
        assert_eq!(cpm.temporal_trace(10), vec![10, 5, 3, 2]);
        assert_eq!(cpm.output_len(10), 32);
    }

    #[test]
    fn full_vpm_yields_five_by_768() {
        let cfg = ModelConfig::full(Architecture::MhSimFc);
        assert_eq!(cfg.r_v_dims().unwrap(), (5, 768));
        assert_eq!(cfg.fused_len().unwrap(), 3872);
    }

    #[test]
    fn desk_vpm_yields_five_by_64() {
        let cfg = ModelConfig::desk(Architecture::MhSimLstm);
        assert_eq!(cfg.r_v_dims().unwrap(), (5, 64));
        assert_eq!(cfg.fused_len().unwrap(), 352);
        cfg.validate().unwrap();
    }

    #[test]
    fn architecture_names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert_eq!("MH_SIM_LSTM".parse::<Architecture>().unwrap(), Architecture::MhSimLstm);
        assert!("unknown".parse::<Architecture>().is_err());
    }

    #[test]
    fn vision_ablation_only_for_lstm() {
        let mut cfg = ModelConfig::desk(Architecture::MhSimFc);
        cfg.use_vision = false;
        assert!(cfg.validate().is_err());
        cfg.architecture = Architecture::MhSimLstm;
        cfg.validate().unwrap();
        assert_eq!(cfg.fused_len().unwrap(), 32);
    }
}
