//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every forward operation appends one node holding its output value and the
//! rule needed to push gradients back to its inputs. Inputs always precede
//! the node that consumes them, so a single reverse sweep visits each node
//! exactly once.

mod kernels;
mod ops;

pub use ops::LN_EPS;

use crate::error::{PspError, Result};
use crate::tensor::Tensor;

/// Lower clamp applied to `p(target)` before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Scale { x: Var, factor: f64 },
    MulConst { x: Var, factors: Vec<f64> },
    Relu { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Transpose { x: Var },
    SoftmaxRows { x: Var },
    MaskedSoftmaxRows { x: Var },
    LayerNormRows {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Conv1dSame { x: Var, kernels: Var, bias: Var },
    MaxOverTime { y: Var, argmax: Vec<usize> },
    CrossEntropy {
        probs: Var,
        targets: Vec<u8>,
        mask: Vec<bool>,
        count: usize,
    },
    Concat { inputs: Vec<Var>, axis: usize },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    RepeatRows { x: Var },
    Reshape { x: Var },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Records a forward computation for later differentiation.
///
/// A tape is owned by exactly one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on a tape.
///
/// Nodes that do not depend on any gradient-requiring leaf, or that the loss
/// does not depend on, have no entry; [`Gradients::get_or_zero`] reads those
/// as zero.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn get_or_zero(&self, var: Var) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.shapes[var.0].iter().product()],
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records `tensor` as an input; it participates in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push_unchecked(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            tensor.requires_grad(),
            Op::Leaf,
        )
    }

    /// Records a value that never receives gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    /// Records a value that receives gradient.
    pub fn variable(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?.with_requires_grad(true);
        Ok(self.leaf(&t))
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].shape
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn to_tensor(&self, var: Var) -> Tensor {
        let node = &self.nodes[var.0];
        Tensor::new(node.shape.clone(), node.value.clone()).expect("tape values are finite")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value[0]
    }

    fn push_unchecked(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, shape: Vec<usize>, value: Vec<f64>, inputs: &[Var], op: Op) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(PspError::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(shape, value, requires_grad, op))
    }

    /// Propagates d(loss)/d(node) to every node the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(PspError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if loss_node.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        let shapes = self.nodes.iter().map(|n| n.shape.clone()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |var: Var, f: &mut dyn FnMut(&mut [f64])| {
            let input = &self.nodes[var.0];
            if !input.requires_grad {
                return;
            }
            let slot = grads[var.0].get_or_insert_with(|| vec![0.0; input.value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (p, q) = self.dims2(*a);
                let r = self.dims2(*b).1;
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                acc(*a, &mut |da| kernels::matmul_nt_acc(g, bv, da, p, q, r));
                acc(*b, &mut |db| kernels::matmul_tn_acc(av, g, db, p, q, r));
            }
            Op::Add { a, b } => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| add_into(db, g));
            }
            Op::Sub { a, b } => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| {
                    for (d, gv) in db.iter_mut().zip(g) {
                        *d -= gv;
                    }
                });
            }
            Op::Mul { a, b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                acc(*a, &mut |da| {
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(bv) {
                        *d += gv * bv;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(av) {
                        *d += gv * av;
                    }
                });
            }
            Op::AddBias { x, bias } => {
                acc(*x, &mut |dx| add_into(dx, g));
                acc(*bias, &mut |db| {
                    let c = db.len();
                    for row in g.chunks(c) {
                        add_into(db, row);
                    }
                });
            }
            Op::Scale { x, factor } => acc(*x, &mut |dx| {
                for (d, gv) in dx.iter_mut().zip(g) {
                    *d += factor * gv;
                }
            }),
            Op::MulConst { x, factors } => acc(*x, &mut |dx| {
                for ((d, gv), f) in dx.iter_mut().zip(g).zip(factors) {
                    *d += f * gv;
                }
            }),
            Op::Relu { x } => {
                let xv = &self.nodes[x.0].value;
                acc(*x, &mut |dx| {
                    for ((d, gv), &xv) in dx.iter_mut().zip(g).zip(xv) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Sigmoid { x } => acc(*x, &mut |dx| {
                for ((d, gv), y) in dx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            Op::Tanh { x } => acc(*x, &mut |dx| {
                for ((d, gv), y) in dx.iter_mut().zip(g).zip(&node.value) {
                    *d += gv * (1.0 - y * y);
                }
            }),
            Op::Transpose { x } => {
                let (r, c) = self.dims2(*x);
                acc(*x, &mut |dx| {
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::SoftmaxRows { x } | Op::MaskedSoftmaxRows { x } => {
                let c = node.shape[1];
                acc(*x, &mut |dx| {
                    for ((drow, grow), yrow) in dx.chunks_mut(c).zip(g.chunks(c)).zip(node.value.chunks(c)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (gv - dot);
                        }
                    }
                });
            }
            Op::LayerNormRows {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let c = node.shape[1];
                let gv = &self.nodes[gain.0].value;
                acc(*gain, &mut |dg| {
                    for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
                        for ((d, a), h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *d += a * h;
                        }
                    }
                });
                acc(*bias, &mut |db| {
                    for grow in g.chunks(c) {
                        add_into(db, grow);
                    }
                });
                acc(*x, &mut |dx| {
                    let n = c as f64;
                    let mut dxhat = vec![0.0; c];
                    for (i, ((drow, grow), hrow)) in
                        dx.chunks_mut(c).zip(g.chunks(c)).zip(xhat.chunks(c)).enumerate()
                    {
                        for ((dh, a), gain) in dxhat.iter_mut().zip(grow).zip(gv) {
                            *dh = a * gain;
                        }
                        let sum: f64 = dxhat.iter().sum();
                        let sum_h: f64 = dxhat.iter().zip(hrow).map(|(a, b)| a * b).sum();
                        for ((d, dh), h) in drow.iter_mut().zip(&dxhat).zip(hrow) {
                            *d += inv_std[i] / n * (n * dh - sum - h * sum_h);
                        }
                    }
                });
            }
            Op::Conv1dSame { x, kernels, bias } => {
                let (l, c_in) = self.dims2(*x);
                let kshape = &self.nodes[kernels.0].shape;
                let (k, c_out) = (kshape[0], kshape[2]);
                let pad = (k - 1) / 2;
                let xv = &self.nodes[x.0].value;
                let kv = &self.nodes[kernels.0].value;
                acc(*bias, &mut |db| {
                    for grow in g.chunks(c_out) {
                        add_into(db, grow);
                    }
                });
                acc(*kernels, &mut |dk| {
                    for t in 0..l {
                        let grow = &g[t * c_out..(t + 1) * c_out];
                        for s in 0..k {
                            let Some(src) = (t + s).checked_sub(pad).filter(|&v| v < l) else {
                                continue;
                            };
                            for i in 0..c_in {
                                let xval = xv[src * c_in + i];
                                let base = (s * c_in + i) * c_out;
                                for (d, gv) in dk[base..base + c_out].iter_mut().zip(grow) {
                                    *d += xval * gv;
                                }
                            }
                        }
                    }
                });
                acc(*x, &mut |dx| {
                    for t in 0..l {
                        let grow = &g[t * c_out..(t + 1) * c_out];
                        for s in 0..k {
                            let Some(src) = (t + s).checked_sub(pad).filter(|&v| v < l) else {
                                continue;
                            };
                            for i in 0..c_in {
                                let base = (s * c_in + i) * c_out;
                                let dot: f64 = kv[base..base + c_out].iter().zip(grow).map(|(a, b)| a * b).sum();
                                dx[src * c_in + i] += dot;
                            }
                        }
                    }
                });
            }
            Op::MaxOverTime { y, argmax } => {
                let k = argmax.len();
                acc(*y, &mut |dy| {
                    for (ch, &t) in argmax.iter().enumerate() {
                        dy[t * k + ch] += g[ch];
                    }
                });
            }
            Op::CrossEntropy {
                probs,
                targets,
                mask,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let pv = &self.nodes[probs.0].value;
                let c = self.nodes[probs.0].shape[1];
                let scale = g[0] / *count as f64;
                acc(*probs, &mut |dp| {
                    for (t, (&target, &keep)) in targets.iter().zip(mask).enumerate() {
                        if !keep {
                            continue;
                        }
                        let idx = t * c + target as usize;
                        if pv[idx] > LOG_CLAMP {
                            dp[idx] -= scale / pv[idx];
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = node.shape[..*axis].iter().product();
                let out_inner: usize = node.shape[*axis..].iter().product();
                let mut offset = 0;
                for input in inputs {
                    let in_inner: usize = self.nodes[input.0].shape[*axis..].iter().product();
                    acc(*input, &mut |dx| {
                        for o in 0..outer {
                            let src = &g[o * out_inner + offset..o * out_inner + offset + in_inner];
                            add_into(&mut dx[o * in_inner..(o + 1) * in_inner], src);
                        }
                    });
                    offset += in_inner;
                }
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.dims2(*x);
                let w = node.shape[1];
                acc(*x, &mut |dx| {
                    for i in 0..r {
                        add_into(&mut dx[i * c + start..i * c + start + w], &g[i * w..(i + 1) * w]);
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let c = self.dims2(*x).1;
                acc(*x, &mut |dx| add_into(&mut dx[start * c..start * c + g.len()], g));
            }
            Op::RepeatRows { x } => acc(*x, &mut |dx| {
                for grow in g.chunks(dx.len()) {
                    add_into(dx, grow);
                }
            }),
            Op::Reshape { x } => acc(*x, &mut |dx| add_into(dx, g)),
            Op::Sum { x } => acc(*x, &mut |dx| {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }),
        }
    }

    fn dims2(&self, var: Var) -> (usize, usize) {
        let s = &self.nodes[var.0].shape;
        (s[0], s[1])
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
