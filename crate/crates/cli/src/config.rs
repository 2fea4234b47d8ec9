//! The run configuration file and its resolution into an experiment.

use std::path::{Path, PathBuf};

use psp_core::corpus::{EmbeddingMode, OovPolicy};
use psp_core::model::{CharEncoderConfig, ConvStackConfig, DecoderConfig};
use psp_core::{AdamConfig, EmbeddingConfig, ExperimentConfig, ModelConfig, PspError, Variant};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Corpus files, concatenated in order.
    pub paths: Vec<PathBuf>,
    /// Fraction of documents used for training; absent means train on all.
    #[serde(default)]
    pub split_ratio: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub char: CharEncoderConfig,
    pub utterance: ConvStackConfig,
    /// Defaults to the utterance stack with halved kernel counts.
    pub discourse: Option<ConvStackConfig>,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            char: CharEncoderConfig::default(),
            utterance: ConvStackConfig::utterance_default(),
            discourse: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderSection {
    pub d_h: usize,
    pub head_hidden: usize,
    /// Defaults to on for the unstarred variants. Must agree with `variant`.
    pub mtl_enabled: Option<bool>,
}

impl Default for DecoderSection {
    fn default() -> Self {
        let d = DecoderConfig::default();
        Self {
            d_h: d.d_h,
            head_hidden: d.head_hidden,
            mtl_enabled: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Context window size.
    pub n: usize,
    pub batch: usize,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            n: e.window_size,
            batch: e.batch_size,
            epochs: e.epochs,
            max_steps: None,
            lr: e.adam.lr,
            beta1: e.adam.beta1,
            beta2: e.adam.beta2,
            epsilon: e.adam.epsilon,
            seed: e.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub corpus: CorpusSection,
    /// Defaults to seeded random vectors of width `encoder.char.d_model`.
    #[serde(default)]
    pub embeddings: Option<EmbeddingConfig>,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub variant: Variant,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::ConfigJson {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Fills every default, applies the seed override and makes paths
    /// absolute against `base_dir`. The result reproduces the run on its own.
    pub fn resolve(mut self, base_dir: &Path, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.training.seed = s;
        }
        let base_dir = std::path::absolute(base_dir).map_err(|source| CliError::Read {
            path: base_dir.to_path_buf(),
            source,
        })?;
        for p in &mut self.corpus.paths {
            *p = absolute(&base_dir, p);
        }
        if self.corpus.paths.is_empty() {
            return Err(config("corpus.paths must name at least one file"));
        }
        if let Some(r) = self.corpus.split_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(config(format!("corpus.split_ratio must lie in (0, 1), got {r}")));
            }
        }
        let d = self.encoder.char.d_model;
        let mut emb = self.embeddings.take().unwrap_or_else(|| EmbeddingConfig::seeded(d, 0));
        if let Some(f) = &emb.file {
            emb.file = Some(absolute(&base_dir, f));
        }
        if emb.mode == EmbeddingMode::FileLookup && emb.file.is_none() {
            return Err(config("embeddings.file is required in file-lookup mode"));
        }
        if emb.mode == EmbeddingMode::SeededRandom && emb.oov != OovPolicy::Zero {
            return Err(config("embeddings.oov applies to file-lookup mode only"));
        }
        self.embeddings = Some(emb);
        if self.encoder.discourse.is_none() {
            self.encoder.discourse = Some(self.encoder.utterance.halved());
        }
        let mtl = !self.variant.is_star();
        match self.decoder.mtl_enabled {
            Some(m) if m != mtl => {
                return Err(config(format!(
                    "decoder.mtl_enabled = {m} contradicts variant {}",
                    self.variant.name()
                )))
            }
            _ => self.decoder.mtl_enabled = Some(mtl),
        }
        self.experiment()?.validate()?;
        Ok(self)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            char_encoder: self.encoder.char.clone(),
            discourse_encoder: self
                .encoder
                .discourse
                .clone()
                .unwrap_or_else(|| self.encoder.utterance.halved()),
            utterance_encoder: self.encoder.utterance.clone(),
            decoder: DecoderConfig {
                d_h: self.decoder.d_h,
                head_hidden: self.decoder.head_hidden,
                mtl_enabled: self.decoder.mtl_enabled.unwrap_or(!self.variant.is_star()),
            },
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let t = &self.training;
        Ok(ExperimentConfig {
            model: self.model_config(),
            embeddings: self
                .embeddings
                .clone()
                .ok_or_else(|| config("embeddings unresolved"))?,
            window_size: t.n,
            batch_size: t.batch,
            epochs: t.epochs,
            max_steps: t.max_steps,
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            seed: t.seed,
        })
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Core(PspError::Config(msg.into()))
}
