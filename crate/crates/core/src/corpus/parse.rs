//! The inline marker corpus format.
//!
//! One utterance per line. `#1`, `#2` or `#3` directly after a character
//! marks a PW, PPH or IPH break after it; a higher marker implies the lower
//! levels. A blank line ends a document and lines starting with `//` are
//! comments.

use super::{BoundaryLabels, Document, Utterance};
use crate::error::{PspError, Result};

pub fn parse_corpus(text: &str) -> Result<Vec<Document>> {
    parse_with(text)
}

/// Reads text in the corpus layout, discarding any markers it carries.
pub fn parse_plain_text(text: &str) -> Result<Vec<Document>> {
    let docs = parse_with(text)?;
    docs.into_iter()
        .map(|d| {
            let utts = d
                .utterances()
                .iter()
                .map(|u| Utterance::unlabeled(u.chars().to_vec()))
                .collect::<Result<Vec<_>>>()?;
            Document::new(d.id, utts)
        })
        .collect()
}

fn parse_with(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Vec<Utterance> = Vec::new();
    let flush = |current: &mut Vec<Utterance>, docs: &mut Vec<Document>| -> Result<()> {
        if !current.is_empty() {
            let id = format!("doc{}", docs.len() + 1);
            docs.push(Document::new(id, std::mem::take(current))?);
        }
        Ok(())
    };
    for (idx, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut current, &mut docs)?;
            continue;
        }
        if line.starts_with("//") {
            continue;
        }
        current.push(parse_line(line, idx + 1)?);
    }
    flush(&mut current, &mut docs)?;
    Ok(docs)
}

fn parse_line(line: &str, lineno: usize) -> Result<Utterance> {
    let err = |message: String| PspError::Parse { line: lineno, message };
    let mut chars = Vec::new();
    let mut levels: Vec<u8> = Vec::new();
    let mut after_marker = false;
    let mut it = line.chars();
    while let Some(c) = it.next() {
        if c != '#' {
            chars.push(c);
            levels.push(0);
            after_marker = false;
            continue;
        }
        let level = match it.next() {
            Some(d @ '1'..='3') => d as u8 - b'0',
            Some(d) => return Err(err(format!("unknown marker #{d}"))),
            None => return Err(err("dangling '#' at end of line".into())),
        };
        if chars.is_empty() {
            return Err(err("marker at position 0".into()));
        }
        if after_marker {
            return Err(err("consecutive markers after one character".into()));
        }
        *levels.last_mut().expect("nonempty") = level;
        after_marker = true;
    }
    if chars.is_empty() {
        return Err(err("empty utterance".into()));
    }
    let labels = BoundaryLabels::from_levels(&levels)?;
    Utterance::new(chars, labels).map_err(|e| err(e.to_string()))
}

/// Re-emits one utterance with the highest marker after each character.
pub fn serialize_utterance(utt: &Utterance) -> String {
    let mut out = String::with_capacity(utt.len() * 2);
    for (t, c) in utt.chars().iter().enumerate() {
        out.push(*c);
        match utt.labels().level_at(t) {
            0 => {}
            lvl => {
                out.push('#');
                out.push((b'0' + lvl) as char);
            }
        }
    }
    out
}

/// Documents separated by a blank line; every utterance line ends in `\n`.
pub fn serialize_corpus(docs: &[Document]) -> String {
    let mut out = String::new();
    for (i, doc) in docs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for utt in doc.utterances() {
            out.push_str(&serialize_utterance(utt));
            out.push('\n');
        }
    }
    out
}
