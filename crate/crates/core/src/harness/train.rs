use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::corpus::{make_batches, slice_windows, ContextWindow, Document, EmbeddingProvider};
use crate::error::{PspError, Result};
use crate::model::{Dropout, Model, Optimizer};

/// Loss of one optimizer step, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based.
    pub step: usize,
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub pw: f64,
    pub pph: f64,
    pub iph: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<StepRecord>,
    /// Windows processed (forward and backward).
    pub samples: usize,
    pub seconds: f64,
}

impl TrainOutcome {
    pub fn samples_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.samples as f64 / self.seconds
        } else {
            0.0
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.curve.last().map(|r| r.loss)
    }
}

/// Every training window of every document.
pub fn training_windows(docs: &[Document], n: usize) -> Result<Vec<ContextWindow>> {
    let mut out = Vec::new();
    for doc in docs {
        out.extend(slice_windows(doc, n)?);
    }
    Ok(out)
}

pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DROPOUT_SALT: u64 = 0xD0;

/// Model, optimizer state and step counter of one run.
#[derive(Debug)]
pub struct Trainer {
    pub model: Model,
    pub provider: EmbeddingProvider,
    optimizer: Optimizer,
    dropout: Option<Dropout>,
    step: usize,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(cfg.model.clone(), cfg.seed)?;
        let provider = EmbeddingProvider::from_config(&cfg.embeddings)?;
        let optimizer = Optimizer::new(&model.params, cfg.adam);
        let rate = cfg.model.char_encoder.dropout;
        let dropout =
            (rate > 0.0).then(|| Dropout::new(rate, ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, DROPOUT_SALT))));
        Ok(Self {
            model,
            provider,
            optimizer,
            dropout,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Accumulates the mean gradient of `batch` and applies one Adam update.
    pub fn step(&mut self, batch: &[&ContextWindow], epoch: usize) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(PspError::Usage("empty batch".into()));
        }
        let step = self.step + 1;
        let diverged = |loss: f64| PspError::Divergence { step, loss };
        let scale = 1.0 / batch.len() as f64;
        self.model.params.clear_grads();
        let mut sums = [0.0; 4];
        for window in batch {
            let (tape, bind, loss) = match self.model.window_objective(window, &self.provider, self.dropout.as_mut()) {
                Ok(v) => v,
                Err(PspError::NonFinite(_)) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            let total = tape.scalar(loss.total);
            if !total.is_finite() {
                return Err(diverged(total));
            }
            for (s, v) in sums.iter_mut().zip([total, tape.scalar(loss.tasks[0]), tape.scalar(loss.tasks[1]), tape.scalar(loss.tasks[2])]) {
                *s += v * scale;
            }
            let grads = match tape.backward(loss.total) {
                Ok(g) => g,
                Err(PspError::NonFinite(_)) => return Err(diverged(total)),
                Err(e) => return Err(e),
            };
            self.model.params.accumulate(&bind, &grads, scale)?;
        }
        match self.optimizer.step(&mut self.model.params) {
            Ok(()) => {}
            Err(PspError::NonFinite(_)) => return Err(diverged(sums[0])),
            Err(e) => return Err(e),
        }
        self.step = step;
        Ok(StepRecord {
            step,
            epoch,
            loss: sums[0],
            pw: sums[1],
            pph: sums[2],
            iph: sums[3],
        })
    }
}

pub fn train(cfg: &ExperimentConfig, docs: &[Document]) -> Result<TrainOutcome> {
    train_with_observer(cfg, docs, |_| {})
}

/// Epochs of shuffled batches; `on_step` sees each step's record as it is
/// produced.
pub fn train_with_observer(
    cfg: &ExperimentConfig,
    docs: &[Document],
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    if docs.is_empty() {
        return Err(PspError::Config("empty training set".into()));
    }
    let mut trainer = Trainer::new(cfg)?;
    let windows = training_windows(docs, cfg.window_size)?;
    let limit = cfg.max_steps.unwrap_or(usize::MAX);
    let mut curve = Vec::new();
    let mut samples = 0;
    let start = Instant::now();
    'epochs: for epoch in 1..=cfg.epochs {
        for batch in make_batches(&windows, cfg.batch_size, mix_seed(cfg.seed, epoch as u64))? {
            if trainer.steps_taken() >= limit {
                break 'epochs;
            }
            let record = trainer.step(&batch, epoch)?;
            samples += batch.len();
            on_step(&record);
            curve.push(record);
        }
    }
    Ok(TrainOutcome {
        model: trainer.model,
        curve,
        samples,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, EmbeddingConfig};
    use crate::model::{CharEncoderConfig, ConvStackConfig, DecoderConfig, ModelConfig, Variant};
    use crate::optim::AdamConfig;

    pub(crate) fn toy(variant: Variant) -> ExperimentConfig {
        let model = ModelConfig {
            variant,
            char_encoder: CharEncoderConfig {
                num_blocks: 1,
                num_heads: 2,
                d_model: 8,
                d_ff: 8,
                dropout: 0.0,
            },
            utterance_encoder: ConvStackConfig::new(3, vec![4, 2]),
            discourse_encoder: ConvStackConfig::new(3, vec![2, 1]),
            decoder: DecoderConfig {
                d_h: 4,
                head_hidden: 4,
                mtl_enabled: true,
            },
        }
        .with_variant(variant);
        ExperimentConfig {
            model,
            embeddings: EmbeddingConfig::seeded(8, 1),
            window_size: 2,
            batch_size: 2,
            epochs: 50,
            max_steps: None,
            adam: AdamConfig::with_lr(1e-2),
            seed: 4,
        }
    }

    fn corpus() -> Vec<Document> {
        parse_corpus("ab#1c#3\nde#2f#3\n\ngh#1i#1j#3\n").unwrap()
    }

    #[test]
    fn loss_decreases_per_task() {
        let mut cfg = toy(Variant::Proposed);
        cfg.max_steps = Some(50);
        let out = train(&cfg, &corpus()).unwrap();
        assert_eq!(out.curve.len(), 50);
        let (first, last) = (out.curve[0], *out.curve.last().unwrap());
        assert!(last.loss < first.loss);
        assert!(last.pw < first.pw && last.pph < first.pph && last.iph < first.iph);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut cfg = toy(Variant::Proposed);
        cfg.adam.lr = 0.0;
        cfg.max_steps = Some(5);
        let before = Model::new(cfg.model.clone(), cfg.seed).unwrap();
        let out = train(&cfg, &corpus()).unwrap();
        for ((_, a), (_, b)) in before.params.iter().zip(out.model.params.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let mut cfg = toy(Variant::ProposedStar);
        cfg.max_steps = Some(10);
        let a = train(&cfg, &corpus()).unwrap();
        let b = train(&cfg, &corpus()).unwrap();
        let la: Vec<u64> = a.curve.iter().map(|r| r.loss.to_bits()).collect();
        let lb: Vec<u64> = b.curve.iter().map(|r| r.loss.to_bits()).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn divergence_names_the_step() {
        let mut cfg = toy(Variant::Transformer);
        cfg.adam.lr = 1e300;
        cfg.max_steps = Some(20);
        match train(&cfg, &corpus()) {
            Err(PspError::Divergence { step, .. }) => assert!((1..=20).contains(&step)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn epochs_bound_steps() {
        let mut cfg = toy(Variant::Proposed);
        cfg.epochs = 3;
        // two docs give 1 + 1 windows at n=2, batch 2 → one step per epoch
        let out = train(&cfg, &corpus()).unwrap();
        assert_eq!(out.curve.len(), 3);
        assert_eq!(out.samples, 6);
        assert!(train(&cfg, &[]).is_err());
    }
}
