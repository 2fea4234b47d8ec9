//! Forward operations. Each records one node on the tape.

use super::kernels;
use super::{Op, Tape, Var, LOG_CLAMP};
use crate::error::{PspError, Result};

/// Variance floor inside layer normalisation.
pub const LN_EPS: f64 = 1e-12;

impl Tape {
    fn expect_2d(&self, op: &'static str, var: Var) -> Result<(usize, usize)> {
        match self.shape(var) {
            [r, c] => Ok((*r, *c)),
            other => Err(PspError::shape(op, other, &[0, 0])),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(PspError::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn map_unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(name, shape, value, &[x], op)
    }

    /// Matrix product of `a[p×q]` and `b[q×r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.expect_2d("matmul", a)?;
        let (q2, r) = self.expect_2d("matmul", b)?;
        if q != q2 {
            return Err(PspError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; p * r];
        kernels::matmul_acc(self.value(a), self.value(b), &mut out, p, q, r);
        self.push("matmul", vec![p, r], out, &[a, b], Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push("add", shape, value, &[a, b], Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        self.push("sub", shape, value, &[a, b], Op::Sub { a, b })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        self.push("mul", shape, value, &[a, b], Op::Mul { a, b })
    }

    /// Adds `bias[c]` to every row of `x[r×c]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.expect_2d("add_bias", x)?;
        if self.value(bias).len() != c {
            return Err(PspError::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias);
        let value = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push("add_bias", shape, value, &[x, bias], Op::AddBias { x, bias })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.map_unary("scale", x, |v| v * factor, Op::Scale { x, factor })
    }

    /// Elementwise product with constant factors (masks, dropout).
    pub fn mul_const(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        if factors.len() != self.value(x).len() {
            return Err(PspError::shape("mul_const", self.shape(x), &[factors.len()]));
        }
        let value = self.value(x).iter().zip(&factors).map(|(v, f)| v * f).collect();
        let shape = self.shape(x).to_vec();
        self.push("mul_const", shape, value, &[x], Op::MulConst { x, factors })
    }

    /// Sets the rows of `x[l×c]` where `mask` is false to zero.
    pub fn zero_masked_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (l, c) = self.expect_2d("zero_masked_rows", x)?;
        if mask.len() != l {
            return Err(PspError::shape("zero_masked_rows", self.shape(x), &[mask.len()]));
        }
        let factors = mask
            .iter()
            .flat_map(|&m| std::iter::repeat_n(if m { 1.0 } else { 0.0 }, c))
            .collect();
        self.mul_const(x, factors)
    }

    /// `max(x, 0)`; the gradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map_unary("relu", x, |v| v.max(0.0), Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map_unary("sigmoid", x, kernels::sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map_unary("tanh", x, f64::tanh, Op::Tanh { x })
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.expect_2d("transpose", x)?;
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        self.push("transpose", vec![c, r], out, &[x], Op::Transpose { x })
    }

    /// Row-wise softmax, stabilised by subtracting the row maximum.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.expect_2d("softmax_rows", x)?;
        let mut out = vec![0.0; r * c];
        for (row, o) in self.value(x).chunks(c).zip(out.chunks_mut(c)) {
            kernels::masked_softmax_into(row, None, o);
        }
        self.push("softmax_rows", vec![r, c], out, &[x], Op::SoftmaxRows { x })
    }

    /// Row-wise softmax restricted to the columns where `column_mask` is
    /// true. Masked columns receive probability exactly 0.
    pub fn masked_softmax_rows(&mut self, x: Var, column_mask: &[bool]) -> Result<Var> {
        let (r, c) = self.expect_2d("masked_softmax_rows", x)?;
        if column_mask.len() != c {
            return Err(PspError::shape("masked_softmax_rows", self.shape(x), &[column_mask.len()]));
        }
        let mut out = vec![0.0; r * c];
        for (row, o) in self.value(x).chunks(c).zip(out.chunks_mut(c)) {
            if !kernels::masked_softmax_into(row, Some(column_mask), o) {
                return Err(PspError::EmptySequence("masked_softmax_rows"));
            }
        }
        self.push(
            "masked_softmax_rows",
            vec![r, c],
            out,
            &[x],
            Op::MaskedSoftmaxRows { x },
        )
    }

    /// Normalises each row of `x[r×c]` to zero mean and unit variance, then
    /// applies `gain[c]` and `bias[c]`.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.expect_2d("layer_norm_rows", x)?;
        if self.value(gain).len() != c || self.value(bias).len() != c {
            return Err(PspError::shape("layer_norm_rows", self.shape(x), self.shape(gain)));
        }
        let n = c as f64;
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        let (gv, bv) = (self.value(gain), self.value(bias));
        for (i, row) in self.value(x).chunks(c).enumerate() {
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = s;
            for j in 0..c {
                let h = (row[j] - mean) * s;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gv[j] + bv[j];
            }
        }
        self.push(
            "layer_norm_rows",
            vec![r, c],
            out,
            &[x, gain, bias],
            Op::LayerNormRows {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Same-padded 1-D cross-correlation of `x[l×c_in]` with
    /// `kernels[k×c_in×c_out]` plus `bias[c_out]`. `k` must be odd.
    pub fn conv1d_same(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (l, c_in) = self.expect_2d("conv1d_same", x)?;
        let &[k, kc_in, c_out] = self.shape(kernels) else {
            return Err(PspError::shape("conv1d_same", self.shape(x), self.shape(kernels)));
        };
        if k % 2 == 0 {
            return Err(PspError::Config(format!("conv1d_same needs an odd kernel size, got {k}")));
        }
        if kc_in != c_in {
            return Err(PspError::shape("conv1d_same", self.shape(x), self.shape(kernels)));
        }
        if self.value(bias).len() != c_out {
            return Err(PspError::shape("conv1d_same", self.shape(kernels), self.shape(bias)));
        }
        let pad = (k - 1) / 2;
        let (xv, kv, bv) = (self.value(x), self.value(kernels), self.value(bias));
        let mut out = vec![0.0; l * c_out];
        for t in 0..l {
            let orow = &mut out[t * c_out..(t + 1) * c_out];
            orow.copy_from_slice(bv);
            for s in 0..k {
                let Some(src) = (t + s).checked_sub(pad).filter(|&v| v < l) else {
                    continue;
                };
                for i in 0..c_in {
                    let xval = xv[src * c_in + i];
                    if xval == 0.0 {
                        continue;
                    }
                    let base = (s * c_in + i) * c_out;
                    for (o, kval) in orow.iter_mut().zip(&kv[base..base + c_out]) {
                        *o += xval * kval;
                    }
                }
            }
        }
        self.push(
            "conv1d_same",
            vec![l, c_out],
            out,
            &[x, kernels, bias],
            Op::Conv1dSame { x, kernels, bias },
        )
    }

    /// Per-channel maximum of `y[l×k]` over the time steps where `mask` is
    /// true. Gradient goes to the first maximal position.
    pub fn max_over_time(&mut self, y: Var, mask: &[bool]) -> Result<Var> {
        let (l, k) = self.expect_2d("max_over_time", y)?;
        if mask.len() != l {
            return Err(PspError::shape("max_over_time", self.shape(y), &[mask.len()]));
        }
        if !mask.iter().any(|&m| m) {
            return Err(PspError::EmptySequence("max_over_time"));
        }
        let yv = self.value(y);
        let mut out = vec![f64::NEG_INFINITY; k];
        let mut argmax = vec![0usize; k];
        for (t, row) in yv.chunks(k).enumerate() {
            if !mask[t] {
                continue;
            }
            for ch in 0..k {
                if row[ch] > out[ch] {
                    out[ch] = row[ch];
                    argmax[ch] = t;
                }
            }
        }
        self.push("max_over_time", vec![k], out, &[y], Op::MaxOverTime { y, argmax })
    }

    /// Mean over unmasked positions of `-ln p(target)`, with `p` clamped
    /// below at [`LOG_CLAMP`]. Zero when every position is masked.
    pub fn masked_cross_entropy(&mut self, probs: Var, targets: &[u8], mask: &[bool]) -> Result<Var> {
        let (t_len, c) = self.expect_2d("masked_cross_entropy", probs)?;
        if targets.len() != t_len || mask.len() != t_len {
            return Err(PspError::shape(
                "masked_cross_entropy",
                self.shape(probs),
                &[targets.len(), mask.len()],
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t as usize >= c) {
            return Err(PspError::Usage(format!("target class {bad} out of range for {c} classes")));
        }
        let pv = self.value(probs);
        let mut total = 0.0;
        let mut count = 0;
        for (t, (&target, &keep)) in targets.iter().zip(mask).enumerate() {
            if keep {
                total -= pv[t * c + target as usize].max(LOG_CLAMP).ln();
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(
            "masked_cross_entropy",
            vec![1],
            vec![loss],
            &[probs],
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
        )
    }

    /// Concatenates tensors of equal rank along `axis`; all other dimensions
    /// must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| PspError::Usage("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(PspError::shape("concat", &base, &[axis]));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(PspError::shape("concat", &base, s));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let inner: usize = self.shape(v)[axis..].iter().product();
                out.extend_from_slice(&self.value(v)[o * inner..(o + 1) * inner]);
            }
        }
        self.push(
            "concat",
            out_shape,
            out,
            inputs,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    /// Columns `start..end` of `x[r×c]`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.expect_2d("slice_cols", x)?;
        if start >= end || end > c {
            return Err(PspError::shape("slice_cols", self.shape(x), &[start, end]));
        }
        let out = self.value(x).chunks(c).flat_map(|row| row[start..end].iter().copied()).collect();
        self.push("slice_cols", vec![r, end - start], out, &[x], Op::SliceCols { x, start })
    }

    /// Rows `start..end` of `x[r×c]`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.expect_2d("slice_rows", x)?;
        if start >= end || end > r {
            return Err(PspError::shape("slice_rows", self.shape(x), &[start, end]));
        }
        let out = self.value(x)[start * c..end * c].to_vec();
        self.push("slice_rows", vec![end - start, c], out, &[x], Op::SliceRows { x, start })
    }

    /// Tiles a vector (any shape, read as one row) into `count` rows.
    pub fn repeat_rows(&mut self, x: Var, count: usize) -> Result<Var> {
        if count == 0 {
            return Err(PspError::Usage("repeat_rows with count 0".into()));
        }
        let row = self.value(x).to_vec();
        let c = row.len();
        let out = row.repeat(count);
        self.push("repeat_rows", vec![count, c], out, &[x], Op::RepeatRows { x })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() || shape.contains(&0) {
            return Err(PspError::shape("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        self.push("reshape", shape, out, &[x], Op::Reshape { x })
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).iter().sum();
        self.push("sum", vec![1], vec![total], &[x], Op::Sum { x })
    }
}
