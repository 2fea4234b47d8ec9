//! Hierarchical encoder: Transformer character encoder, convolutional
//! utterance encoder, and a discourse encoder of the same convolutional
//! shape run across the utterances of a window.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{CharEncoderConfig, ConvStackConfig, ModelConfig};
use super::params::{filled, xavier, Binding, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::corpus::EmbeddedWindow;
use crate::error::{PspError, Result};
use crate::tensor::Tensor;

/// Sinusoidal table: `PE[pos, 2i] = sin(pos / 10000^(2i/d))`,
/// `PE[pos, 2i+1] = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(l: usize, d: usize) -> Result<Tensor> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(PspError::Config(format!("positional encoding needs an even dimension, got {d}")));
    }
    if l == 0 {
        return Err(PspError::Config("positional encoding needs l ≥ 1".into()));
    }
    let mut data = vec![0.0; l * d];
    for pos in 0..l {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = angle.sin();
            data[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![l, d], data)
}

/// Inverted dropout driven by its own seeded stream.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Self { rate, rng }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let factors = (0..tape.value(x).len())
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.mul_const(x, factors)
    }
}

#[derive(Debug, Clone)]
struct Block {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

/// Post-norm Transformer encoder blocks over one utterance.
#[derive(Debug, Clone)]
pub struct CharacterEncoder {
    cfg: CharEncoderConfig,
    blocks: Vec<Block>,
}

impl CharacterEncoder {
    pub fn new(cfg: &CharEncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let blocks = (0..cfg.num_blocks)
            .map(|b| {
                let mut w = |name: &str, rows: usize, cols: usize| {
                    store.add(format!("char.block{b}.{name}"), xavier(rng, vec![rows, cols], rows, cols))
                };
                let (wq, wk, wv, wo) = (w("wq", d, d), w("wk", d, d), w("wv", d, d), w("wo", d, d));
                let (w1, w2) = (w("w1", d, f), w("w2", f, d));
                let mut c = |name: &str, len: usize, value: f64| {
                    store.add(format!("char.block{b}.{name}"), filled(vec![len], value))
                };
                Block {
                    wq,
                    bq: c("bq", d, 0.0),
                    wk,
                    bk: c("bk", d, 0.0),
                    wv,
                    bv: c("bv", d, 0.0),
                    wo,
                    bo: c("bo", d, 0.0),
                    ln1_gain: c("ln1.gain", d, 1.0),
                    ln1_bias: c("ln1.bias", d, 0.0),
                    w1,
                    b1: c("b1", f, 0.0),
                    w2,
                    b2: c("b2", d, 0.0),
                    ln2_gain: c("ln2.gain", d, 1.0),
                    ln2_bias: c("ln2.bias", d, 0.0),
                }
            })
            .collect();
        Self { cfg: cfg.clone(), blocks }
    }

    /// `CR_pj = CharacterEncoder(B_pj + PE)` for `x[l×d]`. Attention never
    /// looks at keys where `mask` is false.
    pub fn encode(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: Var,
        mask: &[bool],
        dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        self.encode_inner(tape, bind, x, mask, dropout, None)
    }

    /// As [`encode`](Self::encode), also returning every head's `l×l`
    /// attention matrix (block-major).
    pub fn encode_with_attention(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: Var,
        mask: &[bool],
    ) -> Result<(Var, Vec<Var>)> {
        let mut attn = Vec::new();
        let out = self.encode_inner(tape, bind, x, mask, None, Some(&mut attn))?;
        Ok((out, attn))
    }

    fn encode_inner(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: Var,
        mask: &[bool],
        mut dropout: Option<&mut Dropout>,
        mut attn_out: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let &[l, d] = tape.shape(x) else {
            return Err(PspError::shape("character_encode", tape.shape(x), &[0, self.cfg.d_model]));
        };
        if d != self.cfg.d_model || mask.len() != l {
            return Err(PspError::shape("character_encode", &[l, d], &[mask.len(), self.cfg.d_model]));
        }
        if !mask.iter().any(|&m| m) {
            return Err(PspError::EmptySequence("character_encode"));
        }
        let pe = positional_encoding(l, d)?;
        let pe = tape.leaf(&pe);
        let mut h = tape.add(x, pe)?;
        let heads = self.cfg.num_heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        for blk in &self.blocks {
            let q = tape.matmul(h, bind[blk.wq])?;
            let q = tape.add_bias(q, bind[blk.bq])?;
            let k = tape.matmul(h, bind[blk.wk])?;
            let k = tape.add_bias(k, bind[blk.bk])?;
            let v = tape.matmul(h, bind[blk.wv])?;
            let v = tape.add_bias(v, bind[blk.bv])?;
            let mut head_outputs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (a, b) = (hd * dk, (hd + 1) * dk);
                let qh = tape.slice_cols(q, a, b)?;
                let kh = tape.slice_cols(k, a, b)?;
                let vh = tape.slice_cols(v, a, b)?;
                let kt = tape.transpose(kh)?;
                let scores = tape.matmul(qh, kt)?;
                let scores = tape.scale(scores, scale)?;
                let probs = tape.masked_softmax_rows(scores, mask)?;
                if let Some(sink) = attn_out.as_deref_mut() {
                    sink.push(probs);
                }
                head_outputs.push(tape.matmul(probs, vh)?);
            }
            let merged = if heads == 1 {
                head_outputs[0]
            } else {
                tape.concat(&head_outputs, 1)?
            };
            let attn = tape.matmul(merged, bind[blk.wo])?;
            let mut attn = tape.add_bias(attn, bind[blk.bo])?;
            if let Some(dr) = dropout.as_deref_mut() {
                attn = dr.apply(tape, attn)?;
            }
            let res = tape.add(h, attn)?;
            let h1 = tape.layer_norm_rows(res, bind[blk.ln1_gain], bind[blk.ln1_bias])?;

            let ff = tape.matmul(h1, bind[blk.w1])?;
            let ff = tape.add_bias(ff, bind[blk.b1])?;
            let ff = tape.relu(ff)?;
            let ff = tape.matmul(ff, bind[blk.w2])?;
            let mut ff = tape.add_bias(ff, bind[blk.b2])?;
            if let Some(dr) = dropout.as_deref_mut() {
                ff = dr.apply(tape, ff)?;
            }
            let res = tape.add(h1, ff)?;
            h = tape.layer_norm_rows(res, bind[blk.ln2_gain], bind[blk.ln2_bias])?;
        }
        Ok(h)
    }
}

/// Conv → ReLU layers with max-over-time pooling after each; the pooled
/// vectors are concatenated. Used for both utterance and discourse encoders.
#[derive(Debug, Clone)]
pub struct ConvStack {
    cfg: ConvStackConfig,
    in_dim: usize,
    layers: Vec<(ParamId, ParamId)>,
}

impl ConvStack {
    pub fn new(prefix: &str, in_dim: usize, cfg: &ConvStackConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let k = cfg.kernel_size;
        let mut c_in = in_dim;
        let layers = cfg
            .kernels
            .iter()
            .enumerate()
            .map(|(r, &c_out)| {
                let kern = store.add(
                    format!("{prefix}.conv{r}.kernels"),
                    xavier(rng, vec![k, c_in, c_out], k * c_in, k * c_out),
                );
                let bias = store.add(format!("{prefix}.conv{r}.bias"), filled(vec![c_out], 0.0));
                c_in = c_out;
                (kern, bias)
            })
            .collect();
        Self {
            cfg: cfg.clone(),
            in_dim,
            layers,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    /// Encodes `x[len×in_dim]` into one vector of width `Σ k_r`. Rows where
    /// `mask` is false are zeroed before every convolution and never win the
    /// pooling.
    pub fn encode(&self, tape: &mut Tape, bind: &Binding, x: Var, mask: &[bool]) -> Result<Var> {
        let &[len, c] = tape.shape(x) else {
            return Err(PspError::shape("conv_stack", tape.shape(x), &[0, self.in_dim]));
        };
        if c != self.in_dim || mask.len() != len {
            return Err(PspError::shape("conv_stack", &[len, c], &[mask.len(), self.in_dim]));
        }
        let has_padding = mask.iter().any(|&m| !m);
        let mut cur = x;
        let mut pooled = Vec::with_capacity(self.layers.len());
        for &(kern, bias) in &self.layers {
            let input = if has_padding {
                tape.zero_masked_rows(cur, mask)?
            } else {
                cur
            };
            let y = tape.conv1d_same(input, bind[kern], bind[bias])?;
            let y = tape.relu(y)?;
            pooled.push(tape.max_over_time(y, mask)?);
            cur = y;
        }
        if pooled.len() == 1 {
            Ok(pooled[0])
        } else {
            tape.concat(&pooled, 0)
        }
    }
}

/// Outputs of the hierarchical encoder for one window.
#[derive(Debug, Clone)]
pub struct WindowRepresentations {
    /// `CR_pj`, one `l×d` matrix per utterance.
    pub cr: Vec<Var>,
    /// `UR_pj`, one `u`-vector per utterance (absent without context encoders).
    pub ur: Option<Vec<Var>>,
    /// `UR_p` stacked as `n×u`.
    pub ur_matrix: Option<Var>,
    /// `DR_p`, a single `q`-vector.
    pub dr: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct HierarchicalEncoder {
    pub character: CharacterEncoder,
    pub utterance: Option<ConvStack>,
    pub discourse: Option<ConvStack>,
}

impl HierarchicalEncoder {
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let character = CharacterEncoder::new(&cfg.char_encoder, store, rng);
        let (utterance, discourse) = if cfg.variant.has_context_encoders() {
            let utt = ConvStack::new("utterance", cfg.d_model(), &cfg.utterance_encoder, store, rng);
            let disc = ConvStack::new("discourse", utt.output_dim(), &cfg.discourse_encoder, store, rng);
            (Some(utt), Some(disc))
        } else {
            (None, None)
        };
        Self {
            character,
            utterance,
            discourse,
        }
    }

    /// Character encoder and utterance encoder per utterance (shared
    /// parameters), then the discourse encoder once over `UR_p`.
    pub fn encode_window(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        embedded: &EmbeddedWindow,
        masks: &[Vec<bool>],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<WindowRepresentations> {
        let (n, l, d) = (embedded.n(), embedded.padded_len(), embedded.d);
        if masks.len() != n || masks.iter().any(|m| m.len() != l) {
            return Err(PspError::shape("encode_window", embedded.features.shape(), &[masks.len(), l]));
        }
        let mut cr = Vec::with_capacity(n);
        for (j, mask) in masks.iter().enumerate() {
            let x = tape.constant(vec![l, d], embedded.utterance(j).to_vec())?;
            cr.push(self.character.encode(tape, bind, x, mask, dropout.as_deref_mut())?);
        }
        let (Some(utt_enc), Some(disc_enc)) = (&self.utterance, &self.discourse) else {
            return Ok(WindowRepresentations {
                cr,
                ur: None,
                ur_matrix: None,
                dr: None,
            });
        };
        let mut ur = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (&c, mask) in cr.iter().zip(masks) {
            let u = utt_enc.encode(tape, bind, c, mask)?;
            rows.push(tape.reshape(u, vec![1, utt_enc.output_dim()])?);
            ur.push(u);
        }
        let ur_matrix = if rows.len() == 1 { rows[0] } else { tape.concat(&rows, 0)? };
        let dr = disc_enc.encode(tape, bind, ur_matrix, &vec![true; n])?;
        Ok(WindowRepresentations {
            cr,
            ur: Some(ur),
            ur_matrix: Some(ur_matrix),
            dr: Some(dr),
        })
    }
}
