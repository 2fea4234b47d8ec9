//! Cascaded multi-task decoder: one GRU per break level, PPH conditioned on
//! the PW hidden states and IPH on both, each followed by a softmax head.

use rand_chacha::ChaCha8Rng;

use super::config::DecoderConfig;
use super::encoder::WindowRepresentations;
use super::params::{filled, xavier, Binding, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::corpus::Level;
use crate::error::{PspError, Result};

/// Weights of one GRU, split per gate.
#[derive(Debug, Clone)]
pub struct Gru {
    pub input_dim: usize,
    pub hidden: usize,
    w_z: ParamId,
    w_r: ParamId,
    w_h: ParamId,
    u_z: ParamId,
    u_r: ParamId,
    u_h: ParamId,
    b_z: ParamId,
    b_r: ParamId,
    b_h: ParamId,
}

impl Gru {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let mut w = |name: &str, rows: usize| {
            store.add(format!("{prefix}.{name}"), xavier(rng, vec![rows, hidden], rows, hidden))
        };
        let (w_z, w_r, w_h) = (w("w_z", input_dim), w("w_r", input_dim), w("w_h", input_dim));
        let (u_z, u_r, u_h) = (w("u_z", hidden), w("u_r", hidden), w("u_h", hidden));
        let mut b = |name: &str| store.add(format!("{prefix}.{name}"), filled(vec![hidden], 0.0));
        Self {
            input_dim,
            hidden,
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z: b("b_z"),
            b_r: b("b_r"),
            b_h: b("b_h"),
        }
    }

    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r, self.b_h,
        ]
    }

    /// One step on row vectors `x[1×d_in]`, `h_prev[1×d_h]`:
    /// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
    /// `h̃ = tanh(x W_h + (r ⊙ h) U_h + b_h)`, `h = (1 − z) ⊙ h_prev + z ⊙ h̃`.
    pub fn cell(&self, tape: &mut Tape, bind: &Binding, x: Var, h_prev: Var) -> Result<Var> {
        if tape.shape(x) != [1, self.input_dim] || tape.shape(h_prev) != [1, self.hidden] {
            return Err(PspError::shape("gru_cell", tape.shape(x), tape.shape(h_prev)));
        }
        let xz = tape.matmul(x, bind[self.w_z])?;
        let xz = tape.add_bias(xz, bind[self.b_z])?;
        let xr = tape.matmul(x, bind[self.w_r])?;
        let xr = tape.add_bias(xr, bind[self.b_r])?;
        let xh = tape.matmul(x, bind[self.w_h])?;
        let xh = tape.add_bias(xh, bind[self.b_h])?;
        self.step(tape, bind, xz, xr, xh, h_prev)
    }

    fn step(&self, tape: &mut Tape, bind: &Binding, xz: Var, xr: Var, xh: Var, h: Var) -> Result<Var> {
        let hz = tape.matmul(h, bind[self.u_z])?;
        let z = tape.add(xz, hz)?;
        let z = tape.sigmoid(z)?;
        let hr = tape.matmul(h, bind[self.u_r])?;
        let r = tape.add(xr, hr)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let rh = tape.matmul(rh, bind[self.u_h])?;
        let cand = tape.add(xh, rh)?;
        let cand = tape.tanh(cand)?;
        // h + z ⊙ (h̃ − h) == (1 − z) ⊙ h + z ⊙ h̃
        let delta = tape.sub(cand, h)?;
        let delta = tape.mul(z, delta)?;
        tape.add(h, delta)
    }

    /// Runs left to right over `xs[T×d_in]` from a zero state; returns
    /// `H[T×d_h]`.
    pub fn run(&self, tape: &mut Tape, bind: &Binding, xs: Var) -> Result<Var> {
        let &[t_len, d_in] = tape.shape(xs) else {
            return Err(PspError::shape("gru", tape.shape(xs), &[0, self.input_dim]));
        };
        if d_in != self.input_dim {
            return Err(PspError::shape("gru", tape.shape(xs), &[t_len, self.input_dim]));
        }
        let xz = tape.matmul(xs, bind[self.w_z])?;
        let xz = tape.add_bias(xz, bind[self.b_z])?;
        let xr = tape.matmul(xs, bind[self.w_r])?;
        let xr = tape.add_bias(xr, bind[self.b_r])?;
        let xh = tape.matmul(xs, bind[self.w_h])?;
        let xh = tape.add_bias(xh, bind[self.b_h])?;
        let mut h = tape.constant(vec![1, self.hidden], vec![0.0; self.hidden])?;
        let mut states = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let (rz, rr, rh) = if t_len == 1 {
                (xz, xr, xh)
            } else {
                (
                    tape.slice_rows(xz, t, t + 1)?,
                    tape.slice_rows(xr, t, t + 1)?,
                    tape.slice_rows(xh, t, t + 1)?,
                )
            };
            h = self.step(tape, bind, rz, rr, rh, h)?;
            states.push(h);
        }
        if states.len() == 1 {
            Ok(states[0])
        } else {
            tape.concat(&states, 0)
        }
    }
}

/// Single-hidden-layer ReLU network followed by a two-way softmax over
/// {no boundary, boundary}.
#[derive(Debug, Clone)]
pub struct Head {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Head {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: store.add(format!("{prefix}.w1"), xavier(rng, vec![input_dim, hidden], input_dim, hidden)),
            b1: store.add(format!("{prefix}.b1"), filled(vec![hidden], 0.0)),
            w2: store.add(format!("{prefix}.w2"), xavier(rng, vec![hidden, 2], hidden, 2)),
            b2: store.add(format!("{prefix}.b2"), filled(vec![2], 0.0)),
        }
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }

    /// `P[T×2]` from hidden states `H[T×d_h]`.
    pub fn classify(&self, tape: &mut Tape, bind: &Binding, hidden: Var) -> Result<Var> {
        let a = tape.matmul(hidden, bind[self.w1])?;
        let a = tape.add_bias(a, bind[self.b1])?;
        let a = tape.relu(a)?;
        let logits = tape.matmul(a, bind[self.w2])?;
        let logits = tape.add_bias(logits, bind[self.b2])?;
        tape.softmax_rows(logits)
    }
}

/// Decision rule: boundary iff `P[t][1] > 0.5`.
pub fn boundary_decision(p_boundary: f64) -> bool {
    p_boundary > 0.5
}

/// Per-character `[CR_pjt ‖ UR_pj ‖ DR_p]` for the real characters of each
/// utterance; one `len_j × (d+u+q)` matrix per utterance. Without context
/// encoders only the CR rows are kept.
pub fn build_mlci(tape: &mut Tape, reps: &WindowRepresentations, lengths: &[usize]) -> Result<Vec<Var>> {
    if reps.cr.len() != lengths.len() {
        return Err(PspError::Alignment(format!(
            "{} utterance representations for {} utterances",
            reps.cr.len(),
            lengths.len()
        )));
    }
    let mut out = Vec::with_capacity(lengths.len());
    for (j, (&cr, &len)) in reps.cr.iter().zip(lengths).enumerate() {
        let padded = tape.shape(cr)[0];
        let cr_real = if len == padded { cr } else { tape.slice_rows(cr, 0, len)? };
        match (&reps.ur, reps.dr) {
            (Some(ur), Some(dr)) => {
                let ur_rep = tape.repeat_rows(ur[j], len)?;
                let dr_rep = tape.repeat_rows(dr, len)?;
                out.push(tape.concat(&[cr_real, ur_rep, dr_rep], 1)?);
            }
            _ => out.push(cr_real),
        }
    }
    Ok(out)
}

/// Hidden states and probabilities of one task over all decoded characters.
#[derive(Debug, Clone, Copy)]
pub struct TaskOutput {
    /// `H[T×d_h]`.
    pub hidden: Var,
    /// `P[T×2]`.
    pub probs: Var,
}

#[derive(Debug, Clone)]
pub struct TaskOutputs {
    pub tasks: [TaskOutput; 3],
    /// Start offset of each utterance's rows within `T`.
    pub offsets: Vec<usize>,
    pub total_len: usize,
}

impl TaskOutputs {
    pub fn get(&self, level: Level) -> TaskOutput {
        self.tasks[level.index()]
    }
}

#[derive(Debug, Clone)]
pub struct MtlDecoder {
    pub mtl_enabled: bool,
    pub pw: Gru,
    pub pph: Gru,
    pub iph: Gru,
    pub heads: [Head; 3],
}

impl MtlDecoder {
    pub fn new(cfg: &DecoderConfig, mlci_width: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let d_h = cfg.d_h;
        let extra = if cfg.mtl_enabled { d_h } else { 0 };
        let pw = Gru::new("decoder.pw.gru", mlci_width, d_h, store, rng);
        let pph = Gru::new("decoder.pph.gru", mlci_width + extra, d_h, store, rng);
        let iph = Gru::new("decoder.iph.gru", mlci_width + 2 * extra, d_h, store, rng);
        let heads = [
            Head::new("decoder.pw.head", d_h, cfg.head_hidden, store, rng),
            Head::new("decoder.pph.head", d_h, cfg.head_hidden, store, rng),
            Head::new("decoder.iph.head", d_h, cfg.head_hidden, store, rng),
        ];
        Self {
            mtl_enabled: cfg.mtl_enabled,
            pw,
            pph,
            iph,
            heads,
        }
    }

    pub fn gru(&self, level: Level) -> &Gru {
        match level {
            Level::Pw => &self.pw,
            Level::Pph => &self.pph,
            Level::Iph => &self.iph,
        }
    }

    /// `H^PW = GRU(MLCI)`.
    pub fn decode_pw(&self, tape: &mut Tape, bind: &Binding, mlci: Var) -> Result<Var> {
        self.pw.run(tape, bind, mlci)
    }

    /// `H^PPH = GRU([MLCI ‖ H^PW])`, or `GRU(MLCI)` without the cascade.
    pub fn decode_pph(&self, tape: &mut Tape, bind: &Binding, mlci: Var, h_pw: Var) -> Result<Var> {
        let input = if self.mtl_enabled {
            check_aligned(tape, mlci, &[h_pw])?;
            tape.concat(&[mlci, h_pw], 1)?
        } else {
            mlci
        };
        self.pph.run(tape, bind, input)
    }

    /// `H^IPH = GRU([MLCI ‖ H^PW ‖ H^PPH])`, or `GRU(MLCI)` without the
    /// cascade.
    pub fn decode_iph(&self, tape: &mut Tape, bind: &Binding, mlci: Var, h_pw: Var, h_pph: Var) -> Result<Var> {
        let input = if self.mtl_enabled {
            check_aligned(tape, mlci, &[h_pw, h_pph])?;
            tape.concat(&[mlci, h_pw, h_pph], 1)?
        } else {
            mlci
        };
        self.iph.run(tape, bind, input)
    }

    /// Decodes every utterance from a zero state and classifies all
    /// characters of the window.
    pub fn decode(&self, tape: &mut Tape, bind: &Binding, mlci: &[Var]) -> Result<TaskOutputs> {
        let mut hidden: [Vec<Var>; 3] = Default::default();
        let mut offsets = Vec::with_capacity(mlci.len());
        let mut total = 0;
        for &x in mlci {
            offsets.push(total);
            total += tape.shape(x)[0];
            let h_pw = self.decode_pw(tape, bind, x)?;
            let h_pph = self.decode_pph(tape, bind, x, h_pw)?;
            let h_iph = self.decode_iph(tape, bind, x, h_pw, h_pph)?;
            hidden[0].push(h_pw);
            hidden[1].push(h_pph);
            hidden[2].push(h_iph);
        }
        let mut tasks = Vec::with_capacity(3);
        for (level, hs) in Level::ALL.iter().zip(&hidden) {
            let h = if hs.len() == 1 { hs[0] } else { tape.concat(hs, 0)? };
            let probs = self.heads[level.index()].classify(tape, bind, h)?;
            tasks.push(TaskOutput { hidden: h, probs });
        }
        Ok(TaskOutputs {
            tasks: [tasks[0], tasks[1], tasks[2]],
            offsets,
            total_len: total,
        })
    }
}

fn check_aligned(tape: &Tape, mlci: Var, others: &[Var]) -> Result<()> {
    let t = tape.shape(mlci)[0];
    for &o in others {
        if tape.shape(o)[0] != t {
            return Err(PspError::Alignment(format!(
                "decoder inputs of length {t} and {}",
                tape.shape(o)[0]
            )));
        }
    }
    Ok(())
}

/// Unweighted sum `L_PW + L_PPH + L_IPH`.
pub fn total_loss(tape: &mut Tape, losses: [Var; 3]) -> Result<Var> {
    let a = tape.add(losses[0], losses[1])?;
    tape.add(a, losses[2])
}
