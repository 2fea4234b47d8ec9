use serde::{Deserialize, Serialize};

use crate::error::{PspError, Result};

/// Transformer character encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharEncoderConfig {
    pub num_blocks: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Dropout after each attention and feed-forward sublayer (training only).
    pub dropout: f64,
}

impl Default for CharEncoderConfig {
    fn default() -> Self {
        Self {
            num_blocks: 2,
            num_heads: 4,
            d_model: 768,
            d_ff: 2048,
            dropout: 0.0,
        }
    }
}

/// A stack of same-padded 1-D convolutions with ReLU, each followed by
/// max-over-time pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvStackConfig {
    #[serde(default = "default_kernel_size")]
    pub kernel_size: usize,
    /// Number of kernels per layer, `k_1..k_m`.
    pub kernels: Vec<usize>,
}

fn default_kernel_size() -> usize {
    3
}

impl ConvStackConfig {
    pub fn new(kernel_size: usize, kernels: Vec<usize>) -> Self {
        Self { kernel_size, kernels }
    }

    pub fn utterance_default() -> Self {
        Self::new(3, vec![128, 64, 64])
    }

    /// Same layout with every kernel count halved (rounded up).
    pub fn halved(&self) -> Self {
        Self::new(self.kernel_size, self.kernels.iter().map(|k| k.div_ceil(2)).collect())
    }

    /// Output width: the sum of kernel counts.
    pub fn output_dim(&self) -> usize {
        self.kernels.iter().sum()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(PspError::Config(format!("{what}: at least one conv layer required")));
        }
        if self.kernels.contains(&0) {
            return Err(PspError::Config(format!("{what}: kernel counts must be ≥ 1")));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(PspError::Config(format!(
                "{what}: kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// GRU hidden size, shared by the three tasks.
    pub d_h: usize,
    /// Hidden width of each softmax head.
    pub head_hidden: usize,
    /// Cascade hidden states PW → PPH → IPH.
    pub mtl_enabled: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            d_h: 128,
            head_hidden: 64,
            mtl_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Proposed,
    ProposedStar,
    Transformer,
    TransformerStar,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Proposed,
        Variant::ProposedStar,
        Variant::Transformer,
        Variant::TransformerStar,
    ];

    /// Cross-task conditioning removed.
    pub fn is_star(self) -> bool {
        matches!(self, Variant::ProposedStar | Variant::TransformerStar)
    }

    /// Utterance and discourse encoders present.
    pub fn has_context_encoders(self) -> bool {
        matches!(self, Variant::Proposed | Variant::ProposedStar)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::ProposedStar => "proposed*",
            Variant::Transformer => "transformer",
            Variant::TransformerStar => "transformer*",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub char_encoder: CharEncoderConfig,
    pub utterance_encoder: ConvStackConfig,
    pub discourse_encoder: ConvStackConfig,
    pub decoder: DecoderConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let utterance = ConvStackConfig::utterance_default();
        Self {
            variant: Variant::Proposed,
            char_encoder: CharEncoderConfig::default(),
            discourse_encoder: utterance.halved(),
            utterance_encoder: utterance,
            decoder: DecoderConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Switches variant, keeping `decoder.mtl_enabled` consistent with it.
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self.decoder.mtl_enabled = !variant.is_star();
        self
    }

    pub fn d_model(&self) -> usize {
        self.char_encoder.d_model
    }

    /// `u`, or 0 when the variant has no utterance encoder.
    pub fn utterance_dim(&self) -> usize {
        if self.variant.has_context_encoders() {
            self.utterance_encoder.output_dim()
        } else {
            0
        }
    }

    /// `q`, or 0 when the variant has no discourse encoder.
    pub fn discourse_dim(&self) -> usize {
        if self.variant.has_context_encoders() {
            self.discourse_encoder.output_dim()
        } else {
            0
        }
    }

    /// Width of the per-character decoder input, `d + u + q`.
    pub fn mlci_width(&self) -> usize {
        self.d_model() + self.utterance_dim() + self.discourse_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.char_encoder;
        if c.d_model == 0 || !c.d_model.is_multiple_of(2) {
            return Err(PspError::Config(format!("d_model must be positive and even, got {}", c.d_model)));
        }
        if c.num_heads == 0 || !c.d_model.is_multiple_of(c.num_heads) {
            return Err(PspError::Config(format!(
                "d_model {} is not divisible by num_heads {}",
                c.d_model, c.num_heads
            )));
        }
        if c.num_blocks > 0 && c.d_ff == 0 {
            return Err(PspError::Config("d_ff must be positive".into()));
        }
        if !(0.0..1.0).contains(&c.dropout) {
            return Err(PspError::Config(format!("dropout must lie in [0, 1), got {}", c.dropout)));
        }
        if self.variant.has_context_encoders() {
            self.utterance_encoder.validate("utterance encoder")?;
            self.discourse_encoder.validate("discourse encoder")?;
        }
        if self.decoder.d_h == 0 || self.decoder.head_hidden == 0 {
            return Err(PspError::Config("decoder sizes must be ≥ 1".into()));
        }
        if self.decoder.mtl_enabled == self.variant.is_star() {
            return Err(PspError::Config(format!(
                "variant {} requires mtl_enabled={}",
                self.variant.name(),
                !self.variant.is_star()
            )));
        }
        Ok(())
    }
}
