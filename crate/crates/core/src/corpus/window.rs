use super::{Document, Utterance};
use crate::error::{PspError, Result};

/// `n` consecutive utterances of a document, padded to the longest one.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub doc_id: String,
    /// 1-based index of the first utterance.
    pub start: usize,
    pub utterances: Vec<Utterance>,
    /// Padded length: longest utterance in the window.
    pub padded_len: usize,
    /// `mask[j][t]` is true iff `t < len(utterances[j])`.
    pub mask: Vec<Vec<bool>>,
    /// True when the document had fewer utterances than the requested size.
    pub short: bool,
}

impl ContextWindow {
    pub fn new(doc_id: impl Into<String>, start: usize, utterances: Vec<Utterance>, short: bool) -> Result<Self> {
        if utterances.is_empty() {
            return Err(PspError::Config("context window without utterances".into()));
        }
        let padded_len = utterances.iter().map(Utterance::len).max().unwrap_or(0);
        let mask = utterances
            .iter()
            .map(|u| (0..padded_len).map(|t| t < u.len()).collect())
            .collect();
        Ok(Self {
            doc_id: doc_id.into(),
            start,
            utterances,
            padded_len,
            mask,
            short,
        })
    }

    /// Number of utterances actually held.
    pub fn size(&self) -> usize {
        self.utterances.len()
    }

    pub fn real_chars(&self) -> usize {
        self.utterances.iter().map(Utterance::len).sum()
    }
}

/// All windows `C_p`, `p = 1..=N-n+1`, in order. A document shorter than
/// `n` yields a single window holding all of it, flagged `short`.
pub fn slice_windows(doc: &Document, n: usize) -> Result<Vec<ContextWindow>> {
    if n == 0 {
        return Err(PspError::Config("window size must be at least 1".into()));
    }
    let utts = doc.utterances();
    if utts.len() < n {
        return Ok(vec![ContextWindow::new(doc.id.clone(), 1, utts.to_vec(), true)?]);
    }
    (0..=utts.len() - n)
        .map(|p0| ContextWindow::new(doc.id.clone(), p0 + 1, utts[p0..p0 + n].to_vec(), false))
        .collect()
}

/// Start of the window used to predict utterance `i` (1-based) of a document
/// with `num_utterances` utterances: the window giving it the most left
/// context, `clamp(i - n + 1, 1, max(N - n + 1, 1))`.
pub fn inference_window_start(num_utterances: usize, n: usize, i: usize) -> Result<usize> {
    if n == 0 {
        return Err(PspError::Config("window size must be at least 1".into()));
    }
    if i == 0 || i > num_utterances {
        return Err(PspError::Usage(format!(
            "utterance index {i} outside 1..={num_utterances}"
        )));
    }
    let last = (num_utterances + 1).saturating_sub(n).max(1);
    Ok((i + 1).saturating_sub(n).clamp(1, last))
}

pub fn assign_inference_window(doc: &Document, n: usize, i: usize) -> Result<usize> {
    inference_window_start(doc.len(), n, i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(n: usize) -> Document {
        let utts = (0..n)
            .map(|i| Utterance::unlabeled(vec!['x'; 1 + i % 3]).unwrap())
            .collect();
        Document::new("d", utts).unwrap()
    }

    #[test]
    fn counts_and_starts() {
        let w = slice_windows(&doc(5), 2).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w.iter().map(|w| w.start).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert!(w.iter().all(|w| w.size() == 2 && !w.short));

        let w = slice_windows(&doc(5), 1).unwrap();
        assert_eq!(w.len(), 5);
        assert!(w.iter().all(|w| w.size() == 1));
    }

    #[test]
    fn short_document_gives_one_truncated_window() {
        let w = slice_windows(&doc(3), 8).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].short);
        assert_eq!(w[0].size(), 3);
    }

    #[test]
    fn mask_marks_real_positions() {
        let w = &slice_windows(&doc(3), 3).unwrap()[0];
        assert_eq!(w.padded_len, 3);
        assert_eq!(w.mask[0], [true, false, false]);
        assert_eq!(w.mask[1], [true, true, false]);
        assert_eq!(w.mask[2], [true, true, true]);
    }

    #[test]
    fn brute_force_window_count() {
        for big_n in 1..=20 {
            let d = doc(big_n);
            for n in 1..=20 {
                let mut expected = Vec::new();
                for p in 1..=big_n {
                    if p + n - 1 <= big_n {
                        expected.push(p);
                    }
                }
                let short = expected.is_empty();
                if short {
                    expected.push(1);
                }
                let got = slice_windows(&d, n).unwrap();
                assert_eq!(got.iter().map(|w| w.start).collect::<Vec<_>>(), expected);
                assert!(got.iter().all(|w| w.short == short));
            }
        }
    }

    #[test]
    fn inference_assignment() {
        assert_eq!(inference_window_start(10, 8, 10).unwrap(), 3);
        for i in 1..=8 {
            assert_eq!(inference_window_start(10, 8, i).unwrap(), 1);
        }
        for i in 1..=5 {
            assert_eq!(inference_window_start(5, 8, i).unwrap(), 1);
        }
        assert!(inference_window_start(5, 2, 0).is_err());
        assert!(inference_window_start(5, 2, 6).is_err());
    }

    #[test]
    fn inference_assignment_covers_every_utterance() {
        for big_n in 1..=20 {
            for n in 1..=20 {
                let windows = slice_windows(&doc(big_n), n).unwrap();
                for i in 1..=big_n {
                    let p = inference_window_start(big_n, n, i).unwrap();
                    let w = windows.iter().find(|w| w.start == p).expect("window exists");
                    assert!(i >= w.start && i < w.start + w.size());
                }
            }
        }
    }
}
