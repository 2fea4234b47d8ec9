//! Frozen per-character input vectors.
//!
//! The provider is never touched by the optimiser: embedded windows enter
//! the tape as constants.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ContextWindow;
use crate::error::{PspError, Result};
use crate::tensor::Tensor;

/// Key of the optional out-of-vocabulary row in an embedding file.
pub const UNK_KEY: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    SeededRandom,
    FileLookup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    /// Unknown characters map to the zero vector.
    Zero,
    /// Unknown characters map to the file's `<unk>` row.
    Unk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub mode: EmbeddingMode,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "default_oov")]
    pub oov: OovPolicy,
}

fn default_oov() -> OovPolicy {
    OovPolicy::Zero
}

impl EmbeddingConfig {
    pub fn seeded(d: usize, seed: u64) -> Self {
        Self {
            mode: EmbeddingMode::SeededRandom,
            d,
            seed,
            file: None,
            oov: OovPolicy::Zero,
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    Seeded { seed: u64 },
    Table { table: HashMap<char, Vec<f64>>, oov: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    d: usize,
    source: Source,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl EmbeddingProvider {
    pub fn seeded(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(PspError::Config("embedding dimension must be positive".into()));
        }
        Ok(Self {
            d,
            source: Source::Seeded { seed },
        })
    }

    /// Parses the TSV embedding format: a `d=<int>` header, then one
    /// `char<TAB>v1<TAB>...<TAB>vd` row per character.
    pub fn from_tsv(text: &str, oov: OovPolicy) -> Result<Self> {
        let err = |line: usize, msg: String| PspError::Embedding(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing d=<int> header".into()))?;
        let d: usize = header
            .trim()
            .strip_prefix("d=")
            .and_then(|v| v.parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| err(1, format!("bad header {header:?}")))?;
        let mut table = HashMap::new();
        let mut unk = None;
        for (idx, line) in lines {
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default();
            let values = fields
                .map(|f| f.trim().parse::<f64>().map_err(|e| err(idx + 1, format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != d {
                return Err(err(idx + 1, format!("expected {d} values, found {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err(idx + 1, "non-finite value".into()));
            }
            if key == UNK_KEY {
                unk = Some(values);
                continue;
            }
            let mut chars = key.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(err(idx + 1, format!("key {key:?} is not a single character")));
            };
            if table.insert(c, values).is_some() {
                return Err(err(idx + 1, format!("duplicate character {c:?}")));
            }
        }
        let oov = match oov {
            OovPolicy::Zero => vec![0.0; d],
            OovPolicy::Unk => unk.ok_or_else(|| PspError::Embedding(format!("oov policy 'unk' needs a {UNK_KEY} row")))?,
        };
        Ok(Self {
            d,
            source: Source::Table { table, oov },
        })
    }

    pub fn from_file(path: &Path, oov: OovPolicy) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text, oov)
    }

    pub fn from_config(cfg: &EmbeddingConfig) -> Result<Self> {
        let provider = match cfg.mode {
            EmbeddingMode::SeededRandom => Self::seeded(cfg.d, cfg.seed)?,
            EmbeddingMode::FileLookup => {
                let path = cfg
                    .file
                    .as_ref()
                    .ok_or_else(|| PspError::Config("file-lookup embeddings need a file".into()))?;
                Self::from_file(path, cfg.oov)?
            }
        };
        if provider.d != cfg.d {
            return Err(PspError::Config(format!(
                "embedding file has d={}, config says d={}",
                provider.d, cfg.d
            )));
        }
        Ok(provider)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Writes the vector for `c` into `out` (length `d`).
    pub fn embed_into(&self, c: char, out: &mut [f64]) {
        match &self.source {
            Source::Seeded { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(c as u64)));
                let bound = 3f64.sqrt();
                for o in out.iter_mut() {
                    *o = rng.gen_range(-bound..bound);
                }
            }
            Source::Table { table, oov } => {
                out.copy_from_slice(table.get(&c).unwrap_or(oov));
            }
        }
    }

    pub fn embed(&self, c: char) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.embed_into(c, &mut out);
        out
    }
}

/// `B_p`: an `n×l×d` tensor whose padded positions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedWindow {
    pub features: Tensor,
    pub d: usize,
}

impl EmbeddedWindow {
    pub fn n(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn padded_len(&self) -> usize {
        self.features.shape()[1]
    }

    /// The `l×d` slab for utterance `j`.
    pub fn utterance(&self, j: usize) -> &[f64] {
        let slab = self.padded_len() * self.d;
        &self.features.data()[j * slab..(j + 1) * slab]
    }
}

pub fn embed_window(window: &ContextWindow, provider: &EmbeddingProvider) -> Result<EmbeddedWindow> {
    let (n, l, d) = (window.size(), window.padded_len, provider.dim());
    let mut data = vec![0.0; n * l * d];
    for (j, utt) in window.utterances.iter().enumerate() {
        for (t, &c) in utt.chars().iter().enumerate() {
            let off = (j * l + t) * d;
            provider.embed_into(c, &mut data[off..off + d]);
        }
    }
    Ok(EmbeddedWindow {
        features: Tensor::new(vec![n, l, d], data)?,
        d,
    })
}
