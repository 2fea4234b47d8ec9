mod common;

use common::*;
use proptest::prelude::*;
use psp_core::corpus::{inference_window_start, make_batches, slice_windows, split_train_test};
use psp_core::harness::{evaluate_f1, predict_documents, score_predictions, Confusion, ExperimentConfig};
use psp_core::model::{load_checkpoint, save_checkpoint, CheckpointHeader, Variant};
use psp_core::{BoundaryLabels, EmbeddingConfig, EmbeddingProvider, Level, Model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn windows_cover_every_utterance(big_n in 1usize..30, n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let doc = random_document(&mut rng, big_n, 4);
        let windows = slice_windows(&doc, n).unwrap();
        prop_assert_eq!(windows.len(), if big_n >= n { big_n - n + 1 } else { 1 });
        for w in &windows {
            prop_assert_eq!(w.size(), n.min(big_n));
            prop_assert_eq!(w.short, big_n < n);
            for (j, utt) in w.utterances.iter().enumerate() {
                prop_assert_eq!(utt, &doc.utterances()[w.start - 1 + j]);
            }
        }
        for i in 1..=big_n {
            let s = inference_window_start(big_n, n, i).unwrap();
            let w = &windows[s - 1];
            prop_assert!(w.start <= i && i < w.start + w.size());
            // Maximal left context: either no earlier window still holds i,
            // or i is already the last utterance of its window.
            prop_assert!(s == 1 || i == s + w.size() - 1 || s == windows.len());
        }
    }

    #[test]
    fn batches_partition_the_shuffle(len in 0usize..60, b in 1usize..9, seed in any::<u64>()) {
        let items: Vec<usize> = (0..len).collect();
        let batches = make_batches(&items, b, seed).unwrap();
        let mut seen: Vec<usize> = batches.iter().flatten().map(|&&x| x).collect();
        prop_assert!(batches.iter().all(|x| !x.is_empty() && x.len() <= b));
        prop_assert_eq!(batches.len(), len.div_ceil(b));
        seen.sort_unstable();
        prop_assert_eq!(seen, items);
    }

    #[test]
    fn split_partitions_documents(k in 2usize..40, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs: Vec<_> = (0..k).map(|i| {
            let mut d = random_document(&mut rng, 1 + i % 3, 3);
            d.id = format!("d{i}");
            d
        }).collect();
        let (train, test) = split_train_test(&docs, ratio, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), k);
        prop_assert!(!train.is_empty() && !test.is_empty());
        let mut ids: Vec<String> = train.iter().chain(&test).map(|d| d.id.clone()).collect();
        ids.sort();
        let mut want: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
        want.sort();
        prop_assert_eq!(ids, want);
    }

    #[test]
    fn swapping_pred_and_gold_swaps_precision_and_recall(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80)
    ) {
        let (pred, gold): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let a = Confusion::from_pairs(&pred, &gold).unwrap();
        let b = Confusion::from_pairs(&gold, &pred).unwrap();
        prop_assert_eq!(a.precision(), b.recall());
        prop_assert_eq!(a.recall(), b.precision());
        prop_assert_eq!(a.f1(), b.f1());
        prop_assert!((0.0..=1.0).contains(&a.f1()));
    }
}

fn tiny_experiment() -> ExperimentConfig {
    ExperimentConfig {
        model: gradient_toy(Variant::Proposed),
        embeddings: EmbeddingConfig::seeded(8, 2),
        window_size: 2,
        batch_size: 2,
        epochs: 1,
        max_steps: None,
        adam: Default::default(),
        seed: 3,
    }
}

#[test]
fn checkpoint_file_preserves_predictions() {
    let exp = tiny_experiment();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let docs: Vec<_> = (0..3).map(|i| random_document(&mut rng, 2 + i, 5)).collect();
    let trained = psp_core::harness::train(&exp, &docs).unwrap().model;
    let header = CheckpointHeader {
        model: exp.model.clone(),
        embeddings: exp.embeddings.clone(),
        window_size: exp.window_size,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &header, &trained).unwrap();
    let (h2, loaded) = load_checkpoint(&path).unwrap();
    assert_eq!(h2, header);
    let provider = EmbeddingProvider::from_config(&h2.embeddings).unwrap();
    let a = predict_documents(&trained, &provider, &docs, 2).unwrap();
    let b = predict_documents(&loaded, &provider, &docs, 2).unwrap();
    assert_eq!(a, b);
    let ra = evaluate_f1(&loaded, &provider, &docs, 2, "x").unwrap();
    let rb = evaluate_f1(&loaded, &provider, &docs, 2, "x").unwrap();
    assert_eq!(ra, rb);

    // A checkpoint for a different architecture is refused at write time.
    let other = Model::new(gradient_toy(Variant::Transformer), 0).unwrap();
    assert!(save_checkpoint(&dir.path().join("bad.ckpt"), &header, &other).is_err());
}

#[test]
fn perfect_predictions_score_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let docs: Vec<_> = (0..4).map(|_| random_document(&mut rng, 5, 6)).collect();
    let preds: Vec<Vec<BoundaryLabels>> = docs
        .iter()
        .map(|d| d.utterances().iter().map(|u| u.labels().clone()).collect())
        .collect();
    let conf = score_predictions(&preds, &docs).unwrap();
    for level in Level::ALL {
        let c = conf[level.index()];
        assert_eq!(c.fp + c.fn_, 0);
        if c.tp > 0 {
            assert_eq!(c.f1(), 1.0);
        }
    }
    let mut short = preds.clone();
    short[0].pop();
    assert!(score_predictions(&short, &docs).is_err());
}
