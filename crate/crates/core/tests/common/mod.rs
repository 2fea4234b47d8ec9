//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use psp_core::corpus::{embed_window, ContextWindow, EmbeddingProvider};
use psp_core::model::{CharEncoderConfig, ConvStackConfig, DecoderConfig, Model, ModelConfig, Variant};
use psp_core::{Document, Level, Tape, Utterance};
use psp_core::corpus::BoundaryLabels;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// d=8, d_h=4, kernels (4,2); discourse kernels halved.
pub fn gradient_toy(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        char_encoder: CharEncoderConfig {
            num_blocks: 2,
            num_heads: 2,
            d_model: 8,
            d_ff: 8,
            dropout: 0.0,
        },
        utterance_encoder: ConvStackConfig::new(3, vec![4, 2]),
        discourse_encoder: ConvStackConfig::new(3, vec![4, 2]).halved(),
        decoder: DecoderConfig {
            d_h: 4,
            head_hidden: 4,
            mtl_enabled: true,
        },
    }
    .with_variant(variant)
}

/// Random labelled utterance of `len` characters over `a..h`.
pub fn random_utterance(rng: &mut ChaCha8Rng, len: usize) -> Utterance {
    let chars: Vec<char> = (0..len).map(|_| (b'a' + rng.gen_range(0..8u8)) as char).collect();
    let levels: Vec<u8> = (0..len).map(|_| rng.gen_range(0..4)).collect();
    Utterance::new(chars, BoundaryLabels::from_levels(&levels).unwrap()).unwrap()
}

pub fn random_window(rng: &mut ChaCha8Rng, lens: &[usize]) -> ContextWindow {
    let utts = lens.iter().map(|&l| random_utterance(rng, l)).collect();
    ContextWindow::new("w", 1, utts, false).unwrap()
}

pub fn random_document(rng: &mut ChaCha8Rng, n_utts: usize, max_len: usize) -> Document {
    let utts = (0..n_utts)
        .map(|_| {
            let l = rng.gen_range(1..=max_len);
            random_utterance(rng, l)
        })
        .collect();
    Document::new("doc", utts).unwrap()
}

/// Coarse layer type of a parameter, from its name.
pub fn layer_type(name: &str) -> &'static str {
    if name.starts_with("char.") {
        if name.contains(".ln") {
            "layer-norm"
        } else if name.ends_with(".w1") || name.ends_with(".b1") || name.ends_with(".w2") || name.ends_with(".b2") {
            "feed-forward"
        } else {
            "attention"
        }
    } else if name.starts_with("utterance.") {
        "utterance-conv"
    } else if name.starts_with("discourse.") {
        "discourse-conv"
    } else if name.contains(".gru.") {
        "gru"
    } else if name.contains(".head.") {
        "head"
    } else {
        "other"
    }
}

pub fn window_loss(model: &Model, window: &ContextWindow, provider: &EmbeddingProvider, level: Option<Level>) -> f64 {
    let embedded = embed_window(window, provider).unwrap();
    let mut tape = Tape::new();
    let bind = model.params.bind(&mut tape);
    let pass = model.forward(&mut tape, &bind, window, &embedded, None).unwrap();
    let loss = model.loss(&mut tape, window, &pass.outputs).unwrap();
    let v = match level {
        Some(l) => loss.tasks[l.index()],
        None => loss.total,
    };
    tape.scalar(v)
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Per layer type: (checked count, worst relative error).
    pub per_type: BTreeMap<&'static str, (usize, f64)>,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Analytic gradient of the window loss against central differences with
/// step `h`, on up to `per_type` randomly chosen scalars of each layer type.
pub fn model_grad_check(model: &mut Model, window: &ContextWindow, provider: &EmbeddingProvider, per_type: usize, h: f64, seed: u64) -> GradCheck {
    let (tape, bind, loss) = model.window_objective(window, provider, None).unwrap();
    let grads = tape.backward(loss.total).unwrap();
    model.params.clear_grads();
    model.params.accumulate(&bind, &grads, 1.0).unwrap();
    let mut by_type: BTreeMap<&'static str, Vec<(psp_core::model::ParamId, usize)>> = BTreeMap::new();
    for id in model.params.ids().collect::<Vec<_>>() {
        let ty = layer_type(model.params.name(id));
        for i in 0..model.params.get(id).numel() {
            by_type.entry(ty).or_default().push((id, i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per = BTreeMap::new();
    for (ty, mut slots) in by_type {
        slots.shuffle(&mut rng);
        slots.truncate(per_type);
        let mut worst: f64 = 0.0;
        for &(id, i) in &slots {
            let analytic = model.params.get(id).grad().map(|g| g[i]).unwrap_or(0.0);
            let orig = model.params.get(id).data()[i];
            model.params.get_mut(id).data_mut()[i] = orig + h;
            let plus = window_loss(model, window, provider, None);
            model.params.get_mut(id).data_mut()[i] = orig - h;
            let minus = window_loss(model, window, provider, None);
            model.params.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic, numeric));
        }
        per.insert(ty, (slots.len(), worst));
    }
    model.params.clear_grads();
    GradCheck { per_type: per }
}
