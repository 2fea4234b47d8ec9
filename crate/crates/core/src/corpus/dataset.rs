use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Document;
use crate::error::{PspError, Result};

/// Utterance, character and per-level boundary counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub utterances: usize,
    pub characters: usize,
    #[serde(rename = "PW")]
    pub pw: usize,
    #[serde(rename = "PPH")]
    pub pph: usize,
    #[serde(rename = "IPH")]
    pub iph: usize,
}

pub fn corpus_stats(docs: &[Document]) -> CorpusStats {
    let mut s = CorpusStats::default();
    for utt in docs.iter().flat_map(Document::utterances) {
        let labels = utt.labels();
        s.utterances += 1;
        s.characters += utt.len();
        s.pw += labels.pw.iter().filter(|&&b| b).count();
        s.pph += labels.pph.iter().filter(|&&b| b).count();
        s.iph += labels.iph.iter().filter(|&&b| b).count();
    }
    s
}

impl CorpusStats {
    /// Aligned two-column table, one row per count.
    pub fn to_table(&self, name: &str) -> String {
        let rows = [
            ("utterance", self.utterances),
            ("character", self.characters),
            ("PW", self.pw),
            ("PPH", self.pph),
            ("IPH", self.iph),
        ];
        let mut out = format!("{:<12}{:<12}{:>12}\n", "Dataset", "Type", "Count");
        for (i, (kind, count)) in rows.iter().enumerate() {
            let label = if i == 0 { name } else { "" };
            out.push_str(&format!("{label:<12}{kind:<12}{count:>12}\n"));
        }
        out
    }
}

/// Document-level split: `round(ratio * N)` documents (at least one, at most
/// `N - 1`) go to training. Both halves keep source order.
pub fn split_train_test(docs: &[Document], ratio: f64, seed: u64) -> Result<(Vec<Document>, Vec<Document>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PspError::Split(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    if docs.len() < 2 {
        return Err(PspError::Split(format!("need at least 2 documents, got {}", docs.len())));
    }
    let n_train = ((ratio * docs.len() as f64).round() as usize).clamp(1, docs.len() - 1);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| docs[i].clone()).collect(),
        test_idx.iter().map(|&i| docs[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn docs(k: usize) -> Vec<Document> {
        let text: Vec<String> = (0..k).map(|i| format!("D{i}#1X\n")).collect();
        parse_corpus(&text.join("\n")).unwrap()
    }

    #[test]
    fn stats_hand_count() {
        let s = corpus_stats(&parse_corpus("AB#1CD#3").unwrap());
        assert_eq!(
            s,
            CorpusStats {
                utterances: 1,
                characters: 4,
                pw: 2,
                pph: 1,
                iph: 1
            }
        );
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }

    #[test]
    fn nine_to_one() {
        let (train, test) = split_train_test(&docs(10), 0.9, 5).unwrap();
        assert_eq!((train.len(), test.len()), (9, 1));
        let (a, b) = split_train_test(&docs(4), 0.5, 5).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let all = docs(12);
        let (a1, b1) = split_train_test(&all, 0.75, 42).unwrap();
        let (a2, b2) = split_train_test(&all, 0.75, 42).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        for d in &b1 {
            assert!(!a1.iter().any(|t| t.id == d.id));
        }
        assert_eq!(a1.len() + b1.len(), all.len());
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_train_test(&docs(1), 0.9, 0), Err(PspError::Split(_))));
        assert!(split_train_test(&docs(5), 1.0, 0).is_err());
        assert!(split_train_test(&docs(5), 0.0, 0).is_err());
    }
}
