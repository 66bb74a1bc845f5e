//! Network configuration: encoder/decoder topology, fusion mode, common
//! feature-map dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{LfccConfig, SincFrontendConfig};

/// Dimensions every encoder projects to: channels x spectral bins x frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonDims {
    pub c: usize,
    pub f: usize,
    pub t: usize,
}

/// How the two branches are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Coarse fusion plus temporal-spectral attention (the full model).
    Tsf,
    /// Coarse fusion only; attention bypassed.
    Concat,
    /// First-order branch only; fusion and decoders bypassed.
    RawOnly,
    /// Second-order branch only; fusion and decoders bypassed.
    PowerOnly,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::Tsf => "tsf",
            FusionMode::Concat => "concat",
            FusionMode::RawOnly => "raw_only",
            FusionMode::PowerOnly => "power_only",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsf" => Ok(FusionMode::Tsf),
            "concat" => Ok(FusionMode::Concat),
            "raw_only" => Ok(FusionMode::RawOnly),
            "power_only" => Ok(FusionMode::PowerOnly),
            other => Err(Error::Config(format!(
                "unknown fusion mode '{other}' (expected tsf|concat|raw_only|power_only)"
            ))),
        }
    }
}

/// One residual block: optional entry max-pool, then two 3x3 convolutions
/// with a skip connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub channels: usize,
    /// Max-pool applied at block entry; (1,1) disables it.
    pub pool: (usize, usize),
}

/// Residual CNN encoder topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub stem_channels: usize,
    pub stem_kernel: (usize, usize),
    pub stem_stride: (usize, usize),
    /// Max-pool right after the stem; (1,1) disables it.
    pub stem_pool: (usize, usize),
    pub blocks: Vec<BlockConfig>,
}

impl EncoderConfig {
    /// Raw-branch default: 6 residual blocks behind a sinc front-end.
    pub fn raw_default() -> Self {
        EncoderConfig {
            stem_channels: 32,
            stem_kernel: (3, 3),
            stem_stride: (1, 1),
            stem_pool: (3, 9),
            blocks: vec![
                BlockConfig { channels: 32, pool: (1, 3) },
                BlockConfig { channels: 32, pool: (1, 3) },
                BlockConfig { channels: 64, pool: (1, 3) },
                BlockConfig { channels: 64, pool: (1, 1) },
                BlockConfig { channels: 64, pool: (1, 1) },
                BlockConfig { channels: 64, pool: (1, 1) },
            ],
        }
    }

    /// Power-branch default: an 18-layer residual network (7x7 stem, four
    /// stages of two blocks, then the 1x1 projection).
    pub fn resnet18() -> Self {
        EncoderConfig {
            stem_channels: 64,
            stem_kernel: (7, 7),
            stem_stride: (2, 2),
            stem_pool: (2, 2),
            blocks: vec![
                BlockConfig { channels: 64, pool: (1, 1) },
                BlockConfig { channels: 64, pool: (1, 1) },
                BlockConfig { channels: 128, pool: (2, 2) },
                BlockConfig { channels: 128, pool: (1, 1) },
                BlockConfig { channels: 256, pool: (2, 2) },
                BlockConfig { channels: 256, pool: (1, 1) },
                BlockConfig { channels: 512, pool: (1, 2) },
                BlockConfig { channels: 512, pool: (1, 1) },
            ],
        }
    }

    pub fn tiny_raw() -> Self {
        EncoderConfig {
            stem_channels: 8,
            stem_kernel: (3, 3),
            stem_stride: (1, 1),
            stem_pool: (2, 6),
            blocks: vec![
                BlockConfig { channels: 8, pool: (1, 3) },
                BlockConfig { channels: 16, pool: (1, 3) },
            ],
        }
    }

    pub fn tiny_power() -> Self {
        EncoderConfig {
            stem_channels: 8,
            stem_kernel: (3, 3),
            stem_stride: (2, 2),
            stem_pool: (1, 1),
            blocks: vec![
                BlockConfig { channels: 8, pool: (1, 1) },
                BlockConfig { channels: 16, pool: (2, 2) },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_channels == 0 || self.blocks.is_empty() {
            return Err(Error::Config("encoder needs a stem and at least one block".into()));
        }
        if self.blocks.iter().any(|b| b.channels == 0 || b.pool.0 == 0 || b.pool.1 == 0) {
            return Err(Error::Config("encoder block channels/pools must be positive".into()));
        }
        Ok(())
    }
}

/// Deconvolution stack; the final adaptive resize pins the output shape to
/// the reconstruction target exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Output channels per layer; the last entry must be 1.
    pub channels: Vec<usize>,
    /// Per-axis upsampling factor per layer, each in 1..=4.
    pub strides: Vec<(usize, usize)>,
}

impl DecoderConfig {
    pub fn raw_default() -> Self {
        DecoderConfig {
            channels: vec![32, 16, 8, 4, 1],
            strides: vec![(1, 3), (1, 3), (1, 3), (1, 3), (3, 3)],
        }
    }

    pub fn power_default() -> Self {
        DecoderConfig {
            channels: vec![32, 16, 8, 1],
            strides: vec![(1, 2), (1, 2), (1, 2), (2, 2)],
        }
    }

    pub fn tiny_raw() -> Self {
        DecoderConfig { channels: vec![8, 4, 1], strides: vec![(2, 4), (1, 4), (1, 4)] }
    }

    pub fn tiny_power() -> Self {
        DecoderConfig { channels: vec![8, 4, 1], strides: vec![(1, 2), (2, 2), (1, 3)] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() {
            return Err(Error::Config(
                "decoder channels and strides must be non-empty and equal-length".into(),
            ));
        }
        if *self.channels.last().unwrap() != 1 {
            return Err(Error::Config("decoder must end in a single channel".into()));
        }
        if self.strides.iter().any(|&(a, b)| !(1..=4).contains(&a) || !(1..=4).contains(&b)) {
            return Err(Error::Config("decoder strides must lie in 1..=4".into()));
        }
        Ok(())
    }
}

/// Classification head: attentive statistics pooling over (F,T) followed by
/// a two-layer MLP producing one logit. Alternative heads slot in as new
/// variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    AttentiveStatsMlp {
        /// Channels of the attention scorer bottleneck.
        attn_channels: usize,
        /// Hidden width of the MLP.
        hidden: usize,
    },
}

impl ClassifierConfig {
    pub fn default_full() -> Self {
        ClassifierConfig::AttentiveStatsMlp { attn_channels: 32, hidden: 64 }
    }

    pub fn tiny() -> Self {
        ClassifierConfig::AttentiveStatsMlp { attn_channels: 8, hidden: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub common_dims: CommonDims,
    pub fusion_mode: FusionMode,
    pub decoders_enabled: bool,
    pub raw_encoder: EncoderConfig,
    pub power_encoder: EncoderConfig,
    pub raw_decoder: DecoderConfig,
    pub power_decoder: DecoderConfig,
    /// Bottleneck channels inside each attention branch.
    pub attention_hidden: usize,
    pub classifier: ClassifierConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            common_dims: CommonDims { c: 64, f: 23, t: 29 },
            fusion_mode: FusionMode::Tsf,
            decoders_enabled: true,
            raw_encoder: EncoderConfig::raw_default(),
            power_encoder: EncoderConfig::resnet18(),
            raw_decoder: DecoderConfig::raw_default(),
            power_decoder: DecoderConfig::power_default(),
            attention_hidden: 8,
            classifier: ClassifierConfig::default_full(),
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used by tests and the synthetic dataset.
    pub fn tiny() -> Self {
        ModelConfig {
            common_dims: CommonDims { c: 16, f: 6, t: 8 },
            fusion_mode: FusionMode::Tsf,
            decoders_enabled: true,
            raw_encoder: EncoderConfig::tiny_raw(),
            power_encoder: EncoderConfig::tiny_power(),
            raw_decoder: DecoderConfig::tiny_raw(),
            power_decoder: DecoderConfig::tiny_power(),
            attention_hidden: 4,
            classifier: ClassifierConfig::tiny(),
        }
    }

    /// Frozen micro configuration (common dims 4x5x6) for gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            common_dims: CommonDims { c: 4, f: 5, t: 6 },
            fusion_mode: FusionMode::Tsf,
            decoders_enabled: true,
            raw_encoder: EncoderConfig {
                stem_channels: 4,
                stem_kernel: (3, 3),
                stem_stride: (1, 1),
                stem_pool: (1, 4),
                blocks: vec![BlockConfig { channels: 4, pool: (1, 2) }],
            },
            power_encoder: EncoderConfig {
                stem_channels: 4,
                stem_kernel: (3, 3),
                stem_stride: (1, 1),
                stem_pool: (1, 1),
                blocks: vec![BlockConfig { channels: 4, pool: (2, 1) }],
            },
            raw_decoder: DecoderConfig { channels: vec![2, 1], strides: vec![(1, 2), (1, 4)] },
            power_decoder: DecoderConfig { channels: vec![2, 1], strides: vec![(2, 1), (1, 2)] },
            attention_hidden: 2,
            classifier: ClassifierConfig::AttentiveStatsMlp { attn_channels: 2, hidden: 4 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let CommonDims { c, f, t } = self.common_dims;
        if c == 0 || f == 0 || t == 0 {
            return Err(Error::Config("common dims must be positive".into()));
        }
        if self.attention_hidden == 0 {
            return Err(Error::Config("attention_hidden must be positive".into()));
        }
        self.raw_encoder.validate()?;
        self.power_encoder.validate()?;
        self.raw_decoder.validate()?;
        self.power_decoder.validate()?;
        Ok(())
    }
}

/// Front-end configuration carried alongside the model (and embedded in
/// checkpoints so scoring runs reproduce training-time features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Samples per utterance after load_waveform.
    pub target_len: usize,
    pub sinc: SincFrontendConfig,
    pub lfcc: LfccConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            target_len: crate::features::DEFAULT_TARGET_LEN,
            sinc: SincFrontendConfig::default(),
            lfcc: LfccConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn tiny() -> Self {
        FeatureConfig {
            target_len: 16000,
            sinc: SincFrontendConfig {
                n_filters: 16,
                kernel_len: 65,
                stride: 32,
                ..Default::default()
            },
            lfcc: LfccConfig { with_deltas: false, ..Default::default() },
        }
    }

    /// Companion of [`ModelConfig::micro`].
    pub fn micro() -> Self {
        FeatureConfig {
            target_len: 2000,
            sinc: SincFrontendConfig {
                n_filters: 6,
                kernel_len: 33,
                stride: 40,
                ..Default::default()
            },
            lfcc: LfccConfig {
                n_ceps: 10,
                n_filters: 12,
                with_deltas: false,
                ..Default::default()
            },
        }
    }
}
