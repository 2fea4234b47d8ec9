//! Multi-level contextual prosodic structure prediction: a reverse-mode
//! autodiff core, the corpus pipeline, the hierarchical encoder and cascaded
//! decoder, and the training and evaluation harness.

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod model;
pub mod optim;
pub mod tensor;

pub use autodiff::{Gradients, Tape, Var};
pub use corpus::{BoundaryLabels, ContextWindow, Document, EmbeddingConfig, EmbeddingProvider, Level, Utterance};
pub use error::{PspError, Result};
pub use harness::{EvalReport, ExperimentConfig, SweepReport};
pub use model::{Model, ModelConfig, Variant};
pub use optim::AdamConfig;
pub use tensor::Tensor;
