//! Synthetic corpora with known structure.
//!
//! MEMORIZE: random text with random nested labels, for capacity checks.
//! CONTEXT: each utterance opens with a cue character; the cue of utterance
//! `i-1` places an extra PPH break inside utterance `i`, so a model that sees
//! one utterance at a time cannot recover it.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BoundaryLabels, Document, Utterance};
use crate::error::{PspError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorizeSpec {
    pub docs: usize,
    /// Letters drawn from the first `alphabet` of `a..z`.
    pub alphabet: usize,
    /// Inclusive range of utterances per document.
    pub utterances: [usize; 2],
    /// Inclusive range of characters per utterance.
    pub length: [usize; 2],
    /// Probability that a position carries level 1, 2 and 3.
    pub level_probs: [f64; 3],
}

impl Default for MemorizeSpec {
    fn default() -> Self {
        Self {
            docs: 32,
            alphabet: 16,
            utterances: [1, 3],
            length: [3, 6],
            level_probs: [0.25, 0.15, 0.10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextSpec {
    pub docs: usize,
    /// Cue characters `A, B, ..`; cue `k` of the previous utterance puts a
    /// PPH break after position `2k+1`.
    pub cues: usize,
    /// Filler letters `a, b, ..` for every non-initial position.
    pub filler: usize,
    pub utterances: [usize; 2],
    pub length: [usize; 2],
}

impl Default for ContextSpec {
    fn default() -> Self {
        Self {
            docs: 200,
            cues: 3,
            filler: 10,
            utterances: [6, 10],
            length: [7, 9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticSpec {
    Memorize(MemorizeSpec),
    Context(ContextSpec),
}

impl SyntheticSpec {
    pub fn generate(&self, seed: u64) -> Result<Vec<Document>> {
        match self {
            SyntheticSpec::Memorize(s) => generate_memorize(s, seed),
            SyntheticSpec::Context(s) => generate_context(s, seed),
        }
    }
}

fn check_range(what: &str, r: [usize; 2], min: usize) -> Result<()> {
    if r[0] < min || r[0] > r[1] {
        return Err(PspError::Config(format!("{what} range {:?} must satisfy {min} ≤ lo ≤ hi", r)));
    }
    Ok(())
}

fn letter(base: u8, i: usize) -> char {
    (base + i as u8) as char
}

impl MemorizeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.docs == 0 {
            return Err(PspError::Config("docs must be at least 1".into()));
        }
        if !(1..=26).contains(&self.alphabet) {
            return Err(PspError::Config(format!("alphabet must lie in 1..=26, got {}", self.alphabet)));
        }
        check_range("utterances", self.utterances, 1)?;
        check_range("length", self.length, 1)?;
        let total: f64 = self.level_probs.iter().sum();
        if self.level_probs.iter().any(|p| !(0.0..=1.0).contains(p)) || total > 1.0 {
            return Err(PspError::Config(format!(
                "level probabilities {:?} must be in [0,1] and sum to at most 1",
                self.level_probs
            )));
        }
        Ok(())
    }
}

pub fn generate_memorize(spec: &MemorizeSpec, seed: u64) -> Result<Vec<Document>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [p1, p2, p3] = spec.level_probs;
    (0..spec.docs)
        .map(|d| {
            let n = rng.gen_range(spec.utterances[0]..=spec.utterances[1]);
            let utts = (0..n)
                .map(|_| {
                    let len = rng.gen_range(spec.length[0]..=spec.length[1]);
                    let chars = (0..len).map(|_| letter(b'a', rng.gen_range(0..spec.alphabet))).collect();
                    let levels: Vec<u8> = (0..len)
                        .map(|_| {
                            let u: f64 = rng.gen();
                            if u < p3 {
                                3
                            } else if u < p3 + p2 {
                                2
                            } else if u < p3 + p2 + p1 {
                                1
                            } else {
                                0
                            }
                        })
                        .collect();
                    Utterance::new(chars, BoundaryLabels::from_levels(&levels)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Document::new(format!("doc{}", d + 1), utts)
        })
        .collect()
}

impl ContextSpec {
    pub fn validate(&self) -> Result<()> {
        if self.docs == 0 {
            return Err(PspError::Config("docs must be at least 1".into()));
        }
        if !(1..=26).contains(&self.cues) || !(1..=26).contains(&self.filler) {
            return Err(PspError::Config("cues and filler must lie in 1..=26".into()));
        }
        check_range("utterances", self.utterances, 1)?;
        check_range("length", self.length, 2)?;
        // The cue-driven break must fall strictly before the final character.
        let last_mid = 2 * (self.cues - 1) + 1;
        if last_mid + 1 >= self.length[0] {
            return Err(PspError::Config(format!(
                "{} cues need utterances of at least {} characters, range starts at {}",
                self.cues,
                last_mid + 2,
                self.length[0]
            )));
        }
        Ok(())
    }

    /// Position of the cue-driven break for cue index `k`.
    pub fn mid_position(k: usize) -> usize {
        2 * k + 1
    }

    pub fn cue_index(c: char) -> Option<usize> {
        c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
    }
}

/// Labels of a CONTEXT utterance of length `len` whose predecessor had cue
/// `prev_cue` (None for the first utterance of a document).
pub fn context_labels(len: usize, prev_cue: Option<usize>) -> BoundaryLabels {
    let mut levels = vec![0u8; len];
    for (t, lvl) in levels.iter_mut().enumerate() {
        if t % 2 == 1 {
            *lvl = 1;
        }
    }
    if let Some(k) = prev_cue {
        levels[ContextSpec::mid_position(k)] = 2;
    }
    levels[len - 1] = 3;
    BoundaryLabels::from_levels(&levels).expect("levels ≤ 3")
}

pub fn generate_context(spec: &ContextSpec, seed: u64) -> Result<Vec<Document>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.docs)
        .map(|d| {
            let n = rng.gen_range(spec.utterances[0]..=spec.utterances[1]);
            let mut prev = None;
            let mut utts = Vec::with_capacity(n);
            for _ in 0..n {
                let len = rng.gen_range(spec.length[0]..=spec.length[1]);
                let cue = rng.gen_range(0..spec.cues);
                let mut chars = vec![letter(b'A', cue)];
                chars.extend((1..len).map(|_| letter(b'a', rng.gen_range(0..spec.filler))));
                utts.push(Utterance::new(chars, context_labels(len, prev))?);
                prev = Some(cue);
            }
            Document::new(format!("doc{}", d + 1), utts)
        })
        .collect()
}

/// Best PPH F1 any single-utterance predictor can reach on the CONTEXT
/// distribution, with the policy attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextCeiling {
    pub f1: f64,
    /// Predicted positions per utterance length.
    pub policy: BTreeMap<usize, Vec<usize>>,
}

/// Expected PPH counts per document for a length-indexed prediction policy.
/// Corpus-level F1 converges to `2TP / (2TP + FP + FN)` of these.
pub fn expected_pph_counts(spec: &ContextSpec, policy: &BTreeMap<usize, Vec<usize>>) -> (f64, f64, f64) {
    let lengths: Vec<usize> = (spec.length[0]..=spec.length[1]).collect();
    let p_len = 1.0 / lengths.len() as f64;
    let mean_utts = (spec.utterances[0] + spec.utterances[1]) as f64 / 2.0;
    // One first utterance per document, the rest have a predecessor.
    let weights = [(None, 1.0), (Some(()), mean_utts - 1.0)];
    let p_cue = 1.0 / spec.cues as f64;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for &len in &lengths {
        let predicted = policy.get(&len).map(Vec::as_slice).unwrap_or(&[]);
        for (prev, w) in weights {
            let w = w * p_len;
            let cues: Vec<(Option<usize>, f64)> = match prev {
                None => vec![(None, 1.0)],
                Some(()) => (0..spec.cues).map(|k| (Some(k), p_cue)).collect(),
            };
            for (cue, pc) in cues {
                let gold = context_labels(len, cue);
                for (t, &g) in gold.pph.iter().enumerate() {
                    let p = predicted.contains(&t);
                    let m = w * pc;
                    match (p, g) {
                        (true, true) => tp += m,
                        (true, false) => fp += m,
                        (false, true) => fn_ += m,
                        (false, false) => {}
                    }
                }
            }
        }
    }
    (tp, fp, fn_)
}

fn f1_of(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// Exhaustive search over length-indexed policies. A single utterance
/// carries no information about its predecessor's cue, and its own text is
/// independent of its labels, so the length is the only usable input.
/// Positions where a PPH break can never occur only add false positives and
/// are left out of the search.
pub fn context_ceiling(spec: &ContextSpec) -> Result<ContextCeiling> {
    spec.validate()?;
    let lengths: Vec<usize> = (spec.length[0]..=spec.length[1]).collect();
    let candidates: Vec<Vec<usize>> = lengths
        .iter()
        .map(|&len| {
            let mut c: Vec<usize> = (0..spec.cues).map(ContextSpec::mid_position).collect();
            c.push(len - 1);
            c
        })
        .collect();
    let bits: usize = candidates.iter().map(Vec::len).sum();
    if bits > 24 {
        return Err(PspError::Config(format!("policy space 2^{bits} is too large to enumerate")));
    }
    let mut best: Option<ContextCeiling> = None;
    for code in 0u64..(1u64 << bits) {
        let mut policy = BTreeMap::new();
        let mut offset = 0;
        for (len, cand) in lengths.iter().zip(&candidates) {
            let chosen: Vec<usize> = cand
                .iter()
                .enumerate()
                .filter(|(i, _)| code >> (offset + i) & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            offset += cand.len();
            policy.insert(*len, chosen);
        }
        let (tp, fp, fn_) = expected_pph_counts(spec, &policy);
        let f1 = f1_of(tp, fp, fn_);
        if best.as_ref().is_none_or(|b| f1 > b.f1) {
            best = Some(ContextCeiling { f1, policy });
        }
    }
    Ok(best.expect("at least the empty policy"))
}
