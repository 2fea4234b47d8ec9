use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::eval::{evaluate_f1, EvalReport};
use super::train::{train, training_windows, Trainer};
use crate::corpus::Document;
use crate::error::{PspError, Result};

/// Window sizes swept by default.
pub const DEFAULT_SIZES: [usize; 6] = [1, 2, 4, 8, 12, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub report: EvalReport,
    pub train_samples: usize,
    pub train_seconds: f64,
    pub samples_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: BTreeMap<usize, SweepPoint>,
}

fn run_point(base: &ExperimentConfig, n: usize, train_docs: &[Document], test_docs: &[Document], dataset: &str) -> Result<SweepPoint> {
    let cfg = base.clone().with_window_size(n);
    let outcome = train(&cfg, train_docs)?;
    let provider = crate::corpus::EmbeddingProvider::from_config(&cfg.embeddings)?;
    let report = evaluate_f1(&outcome.model, &provider, test_docs, n, dataset)?;
    Ok(SweepPoint {
        report,
        train_samples: outcome.samples,
        train_seconds: outcome.seconds,
        samples_per_second: outcome.samples_per_second(),
    })
}

/// Trains and evaluates one independent model per window size, all from the
/// base seed. Points run on up to `workers` threads; results do not depend
/// on the worker count.
pub fn sweep_window_sizes(
    base: &ExperimentConfig,
    sizes: &[usize],
    train_docs: &[Document],
    test_docs: &[Document],
    dataset: &str,
    workers: usize,
) -> Result<SweepReport> {
    if sizes.is_empty() {
        return Err(PspError::Config("sweep needs at least one window size".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PspError::Config(format!("sweep sizes must be strictly increasing, got {sizes:?}")));
    }
    let workers = workers.clamp(1, sizes.len());
    let mut results: Vec<Option<Result<SweepPoint>>> = (0..sizes.len()).map(|_| None).collect();
    for (chunk_sizes, chunk_out) in sizes.chunks(workers).zip(results.chunks_mut(workers)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_sizes
                .iter()
                .map(|&n| s.spawn(move || run_point(base, n, train_docs, test_docs, dataset)))
                .collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(PspError::Usage("sweep worker panicked".into()))));
            }
        });
    }
    let mut points = BTreeMap::new();
    for (&n, r) in sizes.iter().zip(results) {
        points.insert(n, r.expect("every slot filled")?);
    }
    Ok(SweepReport { points })
}

/// Mean wall time of one training sample (forward, backward, accumulate and
/// its share of the optimizer step) at window size `n`, over `samples`
/// windows cycled from `docs`.
pub fn measure_sample_cost(base: &ExperimentConfig, docs: &[Document], n: usize, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(PspError::Config("cost measurement needs at least one sample".into()));
    }
    let cfg = base.clone().with_window_size(n);
    let mut trainer = Trainer::new(&cfg)?;
    let windows = training_windows(docs, n)?;
    if windows.is_empty() {
        return Err(PspError::Config("no training windows".into()));
    }
    let batch = cfg.batch_size;
    let order: Vec<_> = windows.iter().cycle().take(samples).collect();
    let start = Instant::now();
    for chunk in order.chunks(batch) {
        trainer.step(chunk, 1)?;
    }
    Ok(start.elapsed().as_secs_f64() / samples as f64)
}

/// Inclusive band for `cost(2n) / cost(n)` that counts as linear growth.
pub const LINEARITY_BAND: (f64, f64) = (1.5, 3.0);

pub fn is_roughly_linear(cost_n: f64, cost_2n: f64) -> bool {
    let r = cost_2n / cost_n;
    (LINEARITY_BAND.0..=LINEARITY_BAND.1).contains(&r)
}
