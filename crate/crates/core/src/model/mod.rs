//! The full predictor: hierarchical encoder plus cascaded decoder, over one
//! shared parameter store.

pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod params;

pub use checkpoint::{CheckpointHeader, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{CharEncoderConfig, ConvStackConfig, DecoderConfig, ModelConfig, Variant};
pub use decoder::{boundary_decision, build_mlci, total_loss, Gru, Head, MtlDecoder, TaskOutput, TaskOutputs};
pub use encoder::{positional_encoding, CharacterEncoder, ConvStack, Dropout, HierarchicalEncoder, WindowRepresentations};
pub use params::{Binding, Optimizer, ParamId, ParamStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::corpus::{embed_window, BoundaryLabels, ContextWindow, EmbeddedWindow, EmbeddingProvider, Level};
use crate::error::{PspError, Result};

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: HierarchicalEncoder,
    pub decoder: MtlDecoder,
}

/// Everything recorded on the tape for one window.
#[derive(Debug, Clone)]
pub struct WindowPass {
    pub reps: WindowRepresentations,
    pub mlci: Vec<Var>,
    pub outputs: TaskOutputs,
}

/// Per-task and summed losses of one window.
#[derive(Debug, Clone, Copy)]
pub struct WindowLoss {
    pub tasks: [Var; 3],
    pub total: Var,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = HierarchicalEncoder::new(&config, &mut params, &mut rng);
        let decoder = MtlDecoder::new(&config.decoder, config.mlci_width(), &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    /// Records the forward pass of `window` (already embedded).
    pub fn forward(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        window: &ContextWindow,
        embedded: &EmbeddedWindow,
        dropout: Option<&mut Dropout>,
    ) -> Result<WindowPass> {
        if embedded.d != self.config.d_model() {
            return Err(PspError::Embedding(format!(
                "embedding dimension {} does not match d_model {}",
                embedded.d,
                self.config.d_model()
            )));
        }
        let reps = self.encoder.encode_window(tape, bind, embedded, &window.mask, dropout)?;
        let lengths: Vec<usize> = window.utterances.iter().map(|u| u.len()).collect();
        let mlci = build_mlci(tape, &reps, &lengths)?;
        let outputs = self.decoder.decode(tape, bind, &mlci)?;
        Ok(WindowPass { reps, mlci, outputs })
    }

    /// Masked cross-entropy of each task over every real character of the
    /// window, and their sum.
    pub fn loss(&self, tape: &mut Tape, window: &ContextWindow, outputs: &TaskOutputs) -> Result<WindowLoss> {
        let mut tasks = Vec::with_capacity(3);
        for level in Level::ALL {
            let targets: Vec<u8> = window
                .utterances
                .iter()
                .flat_map(|u| u.labels().get(level).iter().map(|&b| u8::from(b)))
                .collect();
            if targets.len() != outputs.total_len {
                return Err(PspError::Alignment(format!(
                    "{} labels for {} decoded characters",
                    targets.len(),
                    outputs.total_len
                )));
            }
            let mask = vec![true; targets.len()];
            tasks.push(tape.masked_cross_entropy(outputs.get(level).probs, &targets, &mask)?);
        }
        let tasks = [tasks[0], tasks[1], tasks[2]];
        Ok(WindowLoss {
            tasks,
            total: total_loss(tape, tasks)?,
        })
    }

    /// Embeds, runs and scores one window on a fresh tape; returns the tape,
    /// binding and loss handles so the caller can differentiate.
    pub fn window_objective(
        &self,
        window: &ContextWindow,
        provider: &EmbeddingProvider,
        dropout: Option<&mut Dropout>,
    ) -> Result<(Tape, Binding, WindowLoss)> {
        let embedded = embed_window(window, provider)?;
        let mut tape = Tape::new();
        let bind = self.params.bind(&mut tape);
        let pass = self.forward(&mut tape, &bind, window, &embedded, dropout)?;
        let loss = self.loss(&mut tape, window, &pass.outputs)?;
        Ok((tape, bind, loss))
    }

    /// Boundary probabilities `P[t][1]` per utterance and level:
    /// `result[j][level][t]`.
    pub fn window_probabilities(
        &self,
        window: &ContextWindow,
        provider: &EmbeddingProvider,
    ) -> Result<Vec<[Vec<f64>; 3]>> {
        let embedded = embed_window(window, provider)?;
        let mut tape = Tape::new();
        let bind = self.params.bind(&mut tape);
        let pass = self.forward(&mut tape, &bind, window, &embedded, None)?;
        let out = &pass.outputs;
        let mut result = Vec::with_capacity(window.size());
        for (j, utt) in window.utterances.iter().enumerate() {
            let off = out.offsets[j];
            let per_level = Level::ALL.map(|level| {
                let probs = tape.value(out.get(level).probs);
                (0..utt.len()).map(|t| probs[(off + t) * 2 + 1]).collect()
            });
            result.push(per_level);
        }
        Ok(result)
    }

    /// Thresholded predictions per utterance of the window. Predictions are
    /// made independently per level, so they need not nest.
    pub fn predict_window(&self, window: &ContextWindow, provider: &EmbeddingProvider) -> Result<Vec<BoundaryLabels>> {
        Ok(self
            .window_probabilities(window, provider)?
            .into_iter()
            .map(|[pw, pph, iph]| BoundaryLabels {
                pw: pw.into_iter().map(boundary_decision).collect(),
                pph: pph.into_iter().map(boundary_decision).collect(),
                iph: iph.into_iter().map(boundary_decision).collect(),
            })
            .collect())
    }
}
