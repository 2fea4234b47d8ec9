//! Training, evaluation, synthetic corpora and the window-size sweep.

pub mod config;
pub mod eval;
pub mod report;
pub mod sweep;
pub mod synthetic;
pub mod train;

pub use config::ExperimentConfig;
pub use eval::{
    close_hierarchy, evaluate_f1, f1_from, predict_document, predict_documents, score_predictions, Confusion, EvalReport,
    TaskMetrics,
};
pub use report::{eval_table, sweep_table, to_canonical_json};
pub use sweep::{is_roughly_linear, measure_sample_cost, sweep_window_sizes, SweepPoint, SweepReport, DEFAULT_SIZES, LINEARITY_BAND};
pub use synthetic::{
    context_ceiling, context_labels, expected_pph_counts, generate_context, generate_memorize, ContextCeiling, ContextSpec,
    MemorizeSpec, SyntheticSpec,
};
pub use train::{train, train_with_observer, training_windows, StepRecord, TrainOutcome, Trainer};
