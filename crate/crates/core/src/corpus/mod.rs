//! Boundary-annotated documents, context windows, and frozen character
//! embeddings.

mod batch;
mod dataset;
mod embed;
mod parse;
mod window;

pub use batch::make_batches;
pub use dataset::{corpus_stats, split_train_test, CorpusStats};
pub use embed::{embed_window, EmbeddedWindow, EmbeddingConfig, EmbeddingMode, EmbeddingProvider, OovPolicy};
pub use parse::{parse_corpus, parse_plain_text, serialize_corpus, serialize_utterance};
pub use window::{assign_inference_window, inference_window_start, slice_windows, ContextWindow};

use serde::{Deserialize, Serialize};

use crate::error::{PspError, Result};

/// The three nested break levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "PW")]
    Pw,
    #[serde(rename = "PPH")]
    Pph,
    #[serde(rename = "IPH")]
    Iph,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Pw, Level::Pph, Level::Iph];

    pub fn name(self) -> &'static str {
        match self {
            Level::Pw => "PW",
            Level::Pph => "PPH",
            Level::Iph => "IPH",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-character boundary flags; `true` means a break of that level follows
/// the character.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundaryLabels {
    pub pw: Vec<bool>,
    pub pph: Vec<bool>,
    pub iph: Vec<bool>,
}

impl BoundaryLabels {
    pub fn unlabeled(len: usize) -> Self {
        Self {
            pw: vec![false; len],
            pph: vec![false; len],
            iph: vec![false; len],
        }
    }

    /// Builds labels from the highest level at each position (0 = none,
    /// 1 = PW, 2 = PPH, 3 = IPH), closing the hierarchy downward.
    pub fn from_levels(levels: &[u8]) -> Result<Self> {
        let mut labels = Self::unlabeled(levels.len());
        for (t, &lvl) in levels.iter().enumerate() {
            if lvl > 3 {
                return Err(PspError::Config(format!("boundary level {lvl} out of range")));
            }
            labels.pw[t] = lvl >= 1;
            labels.pph[t] = lvl >= 2;
            labels.iph[t] = lvl >= 3;
        }
        Ok(labels)
    }

    pub fn len(&self) -> usize {
        self.pw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pw.is_empty()
    }

    pub fn get(&self, level: Level) -> &[bool] {
        match level {
            Level::Pw => &self.pw,
            Level::Pph => &self.pph,
            Level::Iph => &self.iph,
        }
    }

    pub fn get_mut(&mut self, level: Level) -> &mut Vec<bool> {
        match level {
            Level::Pw => &mut self.pw,
            Level::Pph => &mut self.pph,
            Level::Iph => &mut self.iph,
        }
    }

    /// Highest level present at position `t` (0 when no boundary).
    pub fn level_at(&self, t: usize) -> u8 {
        if self.iph[t] {
            3
        } else if self.pph[t] {
            2
        } else if self.pw[t] {
            1
        } else {
            0
        }
    }

    /// `iph ⇒ pph ⇒ pw` at every position.
    pub fn is_hierarchical(&self) -> bool {
        (0..self.len()).all(|t| (!self.iph[t] || self.pph[t]) && (!self.pph[t] || self.pw[t]))
    }
}

/// One line of text with its per-character labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    chars: Vec<char>,
    labels: BoundaryLabels,
}

impl Utterance {
    pub fn new(chars: Vec<char>, labels: BoundaryLabels) -> Result<Self> {
        if chars.is_empty() {
            return Err(PspError::Config("empty utterance".into()));
        }
        let n = chars.len();
        if labels.pw.len() != n || labels.pph.len() != n || labels.iph.len() != n {
            return Err(PspError::Config(format!(
                "label length mismatch: {n} characters, labels {}/{}/{}",
                labels.pw.len(),
                labels.pph.len(),
                labels.iph.len()
            )));
        }
        if !labels.is_hierarchical() {
            return Err(PspError::Config("labels violate iph ⇒ pph ⇒ pw".into()));
        }
        Ok(Self { chars, labels })
    }

    pub fn unlabeled(chars: Vec<char>) -> Result<Self> {
        let labels = BoundaryLabels::unlabeled(chars.len());
        Self::new(chars, labels)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn labels(&self) -> &BoundaryLabels {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn with_labels(&self, labels: BoundaryLabels) -> Result<Self> {
        Self::new(self.chars.clone(), labels)
    }
}

/// An ordered sequence of utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    utterances: Vec<Utterance>,
}

impl Document {
    pub fn new(id: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(PspError::Config("document without utterances".into()));
        }
        Ok(Self {
            id: id.into(),
            utterances,
        })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// Number of utterances, N.
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}
