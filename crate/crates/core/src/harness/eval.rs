use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{inference_window_start, BoundaryLabels, ContextWindow, Document, EmbeddingProvider, Level};
use crate::error::{PspError, Result};
use crate::model::Model;

/// Boundary-class counts at character positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_pairs(pred: &[bool], gold: &[bool]) -> Result<Self> {
        let mut c = Self::default();
        c.add(pred, gold)?;
        Ok(c)
    }

    pub fn add(&mut self, pred: &[bool], gold: &[bool]) -> Result<()> {
        if pred.len() != gold.len() {
            return Err(PspError::Alignment(format!(
                "{} predictions for {} gold labels",
                pred.len(),
                gold.len()
            )));
        }
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// TP/(TP+FP), 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// TP/(TP+FN), 0 when there is no gold positive.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_from(self.precision(), self.recall())
    }

    pub fn metrics(&self) -> TaskMetrics {
        TaskMetrics {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
            confusion: *self,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `2PR/(P+R)`, 0 when `P+R = 0`.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: String,
    pub window_size: usize,
    pub tasks: BTreeMap<Level, TaskMetrics>,
}

impl EvalReport {
    pub fn from_confusions(dataset: &str, variant: &str, window_size: usize, conf: [Confusion; 3]) -> Self {
        Self {
            dataset: dataset.to_string(),
            variant: variant.to_string(),
            window_size,
            tasks: Level::ALL.iter().map(|&l| (l, conf[l.index()].metrics())).collect(),
        }
    }

    pub fn task(&self, level: Level) -> &TaskMetrics {
        &self.tasks[&level]
    }
}

/// Per-level confusion of predicted against gold labels, over all
/// utterances of all documents.
pub fn score_predictions(predictions: &[Vec<BoundaryLabels>], docs: &[Document]) -> Result<[Confusion; 3]> {
    if predictions.len() != docs.len() {
        return Err(PspError::Alignment(format!(
            "{} predicted documents for {} gold documents",
            predictions.len(),
            docs.len()
        )));
    }
    let mut conf = [Confusion::default(); 3];
    for (pred_doc, doc) in predictions.iter().zip(docs) {
        if pred_doc.len() != doc.len() {
            return Err(PspError::Alignment(format!("document {}: utterance count differs", doc.id)));
        }
        for (pred, utt) in pred_doc.iter().zip(doc.utterances()) {
            for level in Level::ALL {
                conf[level.index()].add(pred.get(level), utt.labels().get(level))?;
            }
        }
    }
    Ok(conf)
}

/// Predicts every utterance from its inference window. Each distinct window
/// is run once.
pub fn predict_document(model: &Model, provider: &EmbeddingProvider, doc: &Document, n: usize) -> Result<Vec<BoundaryLabels>> {
    let utts = doc.utterances();
    let mut cache: BTreeMap<usize, Vec<BoundaryLabels>> = BTreeMap::new();
    let mut out = Vec::with_capacity(utts.len());
    for i in 1..=utts.len() {
        let start = inference_window_start(utts.len(), n, i)?;
        if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(start) {
            let end = (start - 1 + n).min(utts.len());
            let window = ContextWindow::new(doc.id.clone(), start, utts[start - 1..end].to_vec(), utts.len() < n)?;
            e.insert(model.predict_window(&window, provider)?);
        }
        out.push(cache[&start][i - start].clone());
    }
    Ok(out)
}

pub fn predict_documents(model: &Model, provider: &EmbeddingProvider, docs: &[Document], n: usize) -> Result<Vec<Vec<BoundaryLabels>>> {
    docs.iter().map(|d| predict_document(model, provider, d, n)).collect()
}

pub fn evaluate_f1(model: &Model, provider: &EmbeddingProvider, docs: &[Document], n: usize, dataset: &str) -> Result<EvalReport> {
    let preds = predict_documents(model, provider, docs, n)?;
    let conf = score_predictions(&preds, docs)?;
    Ok(EvalReport::from_confusions(dataset, model.config.variant.name(), n, conf))
}

/// Predicted labels with hierarchy closure applied, for re-emission in the
/// marker format.
pub fn close_hierarchy(labels: &BoundaryLabels) -> BoundaryLabels {
    let levels: Vec<u8> = (0..labels.len()).map(|t| labels.level_at(t)).collect();
    BoundaryLabels::from_levels(&levels).expect("levels are at most 3")
}
