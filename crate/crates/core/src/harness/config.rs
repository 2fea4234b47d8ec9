use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingConfig;
use crate::error::{PspError, Result};
use crate::model::{ModelConfig, Variant};
use crate::optim::AdamConfig;

/// One training run: model, inputs and optimisation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub embeddings: EmbeddingConfig,
    /// Context window size `n`.
    pub window_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Seeds parameter init, batch order and dropout.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let d = model.d_model();
        Self {
            model,
            embeddings: EmbeddingConfig::seeded(d, 0),
            window_size: 8,
            batch_size: 16,
            epochs: 10,
            max_steps: None,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn variant(&self) -> Variant {
        self.model.variant
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.model = self.model.with_variant(variant);
        self
    }

    pub fn with_window_size(mut self, n: usize) -> Self {
        self.window_size = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.embeddings.d != self.model.d_model() {
            return Err(PspError::Config(format!(
                "embedding dimension {} does not match d_model {}",
                self.embeddings.d,
                self.model.d_model()
            )));
        }
        if self.window_size == 0 {
            return Err(PspError::Config("window size must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(PspError::Config("batch size must be at least 1".into()));
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(PspError::Config(format!("learning rate must be finite and ≥ 0, got {}", self.adam.lr)));
        }
        Ok(())
    }
}
