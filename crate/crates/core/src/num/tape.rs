//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Forward values are computed eagerly as operations are recorded; `backward`
//! walks the tape once in reverse and accumulates gradients. The op set is a
//! closed enum: exactly what the encoder, the task heads and the losses need,
//! each with a hand-written adjoint that is exercised by finite-difference
//! checks in the test suite.
//!
//! Determinism contract: single-threaded, fixed reduction order. Identical
//! seeds and inputs replay bitwise-identical values and gradients.

use super::rng::Rng;
use super::tensor::Tensor;
use super::NumError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A named tensor with a gradient bucket.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Flat collection of model parameters. Optimisers and checkpoints walk it
/// in insertion order, which is part of the determinism contract.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, idx: usize) -> &Tensor {
        &self.params[idx].value
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.params[idx].value
    }

    pub fn grad(&self, idx: usize) -> &Tensor {
        &self.params[idx].grad
    }

    pub fn param(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Copy values from a store with the identical layout (names and shapes
    /// in order), e.g. a loaded checkpoint.
    pub fn assign_values(&mut self, other: &ParamStore) -> Result<(), NumError> {
        if self.len() != other.len() {
            return Err(NumError::ShapeMismatch(format!(
                "store holds {} parameters, source {}",
                self.len(),
                other.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(NumError::ShapeMismatch(format!(
                    "parameter {} does not match source {}",
                    mine.name, theirs.name
                )));
            }
            mine.value = theirs.value.clone();
        }
        Ok(())
    }
}

enum Op {
    /// Constant input; no gradient flows out.
    Leaf,
    /// Leaf bound to `ParamStore` slot.
    Param(usize),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Matrix plus row-vector bias, broadcast over rows.
    AddBias(Var, Var),
    /// Plus a constant tensor; adjoint is the identity.
    AddConst(Var),
    /// Elementwise product with a constant tensor (masking).
    MulConst(Var, Tensor),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    Gelu(Var),
    /// Row gather from an embedding table.
    Embedding { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gain: Var, bias: Var },
    /// Width-`k` 1-D convolution over rows with zero ("same") padding.
    Conv1dSame { x: Var, w: Var, b: Var },
    /// Mask already folded with the 1/(1-p) keep scaling.
    Dropout { x: Var, mask: Tensor },
    Reshape(Var),
    SliceRows { x: Var, start: usize, len: usize },
    SliceCols { x: Var, start: usize, len: usize },
    ConcatCols(Vec<Var>),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    /// Summed cross-entropy of row logits against constant target rows.
    CeSmoothed { logits: Var, target: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for one reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Bind a parameter as a leaf; `backward_into` will route its gradient
    /// back to the store slot.
    pub fn param(&mut self, store: &ParamStore, idx: usize) -> Var {
        self.push(store.value(idx).clone(), Op::Param(idx))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.value(a).zip(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NumError> {
        let (_, c) = self.value(a).dims2()?;
        if self.value(bias).numel() != c {
            return Err(NumError::ShapeMismatch(format!(
                "bias of {} over {} columns",
                self.value(bias).numel(),
                c
            )));
        }
        let mut v = self.value(a).clone();
        let bias_t = self.value(bias).data().to_vec();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += bias_t[i % c];
        }
        Ok(self.push(v, Op::AddBias(a, bias)))
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var, NumError> {
        let v = self.value(a).add(c)?;
        Ok(self.push(v, Op::AddConst(a)))
    }

    pub fn mul_const(&mut self, a: Var, c: &Tensor) -> Result<Var, NumError> {
        let v = self.value(a).zip(c, |x, y| x * y)?;
        Ok(self.push(v, Op::MulConst(a, c.clone())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumError> {
        let v = self.value(a).transpose2()?;
        Ok(self.push(v, Op::Transpose(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumError> {
        let (rows, cols) = self.value(table).dims2()?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(NumError::ShapeMismatch(format!(
                "embedding id {} out of table height {}",
                bad, rows
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(self.value(table).row(i));
        }
        let v = Tensor::new(vec![ids.len(), cols], data)?;
        Ok(self.push(
            v,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Per-row layer normalisation with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumError> {
        let (rows, cols) = self.value(x).dims2()?;
        if self.value(gain).numel() != cols || self.value(bias).numel() != cols {
            return Err(NumError::ShapeMismatch(
                "layer-norm gain/bias width".to_string(),
            ));
        }
        let mut out = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let row = self.value(x).row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..cols {
                let xhat = (row[c] - mean) * inv;
                let y = xhat * self.value(gain).data()[c] + self.value(bias).data()[c];
                out.set2(r, c, y);
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gain, bias }))
    }

    /// `x`: (L, c_in); `w`: (c_out, c_in, k) with odd k; `b`: (c_out).
    /// Output (L, c_out), zero padding keeps the length.
    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumError> {
        let (len, c_in) = self.value(x).dims2()?;
        let wshape = self.value(w).shape().to_vec();
        let [c_out, wc_in, k] = wshape.as_slice() else {
            return Err(NumError::ShapeMismatch(format!(
                "conv weight must be rank 3, got {:?}",
                wshape
            )));
        };
        let (c_out, wc_in, k) = (*c_out, *wc_in, *k);
        if wc_in != c_in || self.value(b).numel() != c_out || k % 2 == 0 {
            return Err(NumError::ShapeMismatch(format!(
                "conv1d x {:?} w {:?} b {:?}",
                self.value(x).shape(),
                wshape,
                self.value(b).shape()
            )));
        }
        let pad = k / 2;
        let mut out = Tensor::zeros(&[len, c_out]);
        for l in 0..len {
            for co in 0..c_out {
                let mut acc = self.value(b).data()[co];
                for dk in 0..k {
                    let src = l as isize + dk as isize - pad as isize;
                    if src < 0 || src >= len as isize {
                        continue;
                    }
                    let xr = self.value(x).row(src as usize);
                    let wbase = (co * c_in) * k + dk;
                    for ci in 0..c_in {
                        acc += xr[ci] * self.value(w).data()[wbase + ci * k];
                    }
                }
                out.set2(l, co, acc);
            }
        }
        Ok(self.push(out, Op::Conv1dSame { x, w, b }))
    }

    /// Inverted dropout. `rng: None` (eval) or `p == 0` is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, rng: Option<&mut Rng>) -> Var {
        let Some(rng) = rng else { return x };
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let mask = Tensor::new(
            self.value(x).shape().to_vec(),
            (0..self.value(x).numel())
                .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        )
        .expect("mask shape");
        let v = self
            .value(x)
            .zip(&mask, |a, m| a * m)
            .expect("dropout mask shape");
        self.push(v, Op::Dropout { x, mask })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(NumError::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                self.value(x).shape(),
                shape
            )));
        }
        let v = Tensor::new(shape.to_vec(), self.value(x).data().to_vec())?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let (rows, cols) = self.value(x).dims2()?;
        if start + len > rows {
            return Err(NumError::ShapeMismatch(format!(
                "row slice {}..{} of {} rows",
                start,
                start + len,
                rows
            )));
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let v = Tensor::new(vec![len, cols], data)?;
        Ok(self.push(v, Op::SliceRows { x, start, len }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let (rows, cols) = self.value(x).dims2()?;
        if start + len > cols {
            return Err(NumError::ShapeMismatch(format!(
                "col slice {}..{} of {} cols",
                start,
                start + len,
                cols
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&self.value(x).row(r)[start..start + len]);
        }
        let v = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(v, Op::SliceCols { x, start, len }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        if parts.is_empty() {
            return Err(NumError::ShapeMismatch("concat of nothing".to_string()));
        }
        let (rows, _) = self.value(parts[0]).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(NumError::ShapeMismatch(
                    "concat_cols row mismatch".to_string(),
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Numerically stable softmax over each row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, NumError> {
        let (rows, cols) = self.value(x).dims2()?;
        let mut out = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let row = self.value(x).row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for c in 0..cols {
                denom += (row[c] - m).exp();
            }
            for c in 0..cols {
                out.set2(r, c, (row[c] - m).exp() / denom);
            }
        }
        Ok(self.push(out, Op::SoftmaxRows(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let v = Tensor::scalar(self.value(x).sum() / n);
        self.push(v, Op::Mean(x))
    }

    /// Cross-entropy of each logit row against a fixed target distribution
    /// row, summed over rows: `Σ_rows −Σ_c t_c · log softmax(x)_c`.
    pub fn cross_entropy_rows(&mut self, logits: Var, target: &Tensor) -> Result<Var, NumError> {
        let (rows, cols) = self.value(logits).dims2()?;
        let (trows, tcols) = target.dims2()?;
        if trows != rows || tcols != cols {
            return Err(NumError::ShapeMismatch(format!(
                "cross-entropy logits {:?} vs target {:?}",
                self.value(logits).shape(),
                target.shape()
            )));
        }
        let mut total = 0.0;
        for r in 0..rows {
            let row = self.value(logits).row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            for c in 0..cols {
                let t = target.get2(r, c);
                if t != 0.0 {
                    total += t * (lse - row[c]);
                }
            }
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CeSmoothed {
                logits,
                target: target.clone(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss. Returns one gradient per node.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>, NumError> {
        if loss.0 >= self.nodes.len() {
            return Err(NumError::DisconnectedGraph);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NumError::NotScalarLoss);
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0] = Tensor::scalar(1.0);

        for i in (0..=loss.0).rev() {
            let g = grads[i].clone();
            if g.data().iter().all(|&x| x == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf | Op::Param(_) => {}
                Op::Add(a, b) => {
                    grads[a.0].add_assign(&g);
                    grads[b.0].add_assign(&g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip(&self.nodes[b.0].value, |gv, bv| gv * bv)?;
                    let db = g.zip(&self.nodes[a.0].value, |gv, av| gv * av)?;
                    grads[a.0].add_assign(&da);
                    grads[b.0].add_assign(&db);
                }
                Op::Scale(a, c) => {
                    grads[a.0].add_assign(&g.map(|x| x * c));
                }
                Op::AddBias(a, bias) => {
                    grads[a.0].add_assign(&g);
                    let (rows, cols) = g.dims2()?;
                    let mut db = Tensor::zeros(self.nodes[bias.0].value.shape());
                    for r in 0..rows {
                        for c in 0..cols {
                            db.data_mut()[c] += g.get2(r, c);
                        }
                    }
                    grads[bias.0].add_assign(&db);
                }
                Op::AddConst(a) => {
                    grads[a.0].add_assign(&g);
                }
                Op::MulConst(a, c) => {
                    grads[a.0].add_assign(&g.zip(c, |gv, cv| gv * cv)?);
                }
                Op::MatMul(a, b) => {
                    let bt = self.nodes[b.0].value.transpose2()?;
                    let at = self.nodes[a.0].value.transpose2()?;
                    grads[a.0].add_assign(&g.matmul(&bt)?);
                    grads[b.0].add_assign(&at.matmul(&g)?);
                }
                Op::Transpose(a) => {
                    grads[a.0].add_assign(&g.transpose2()?);
                }
                Op::Relu(a) => {
                    let da = g.zip(&self.nodes[a.0].value, |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    grads[a.0].add_assign(&da);
                }
                Op::Gelu(a) => {
                    let da = g.zip(&self.nodes[a.0].value, |gv, x| gv * gelu_grad(x))?;
                    grads[a.0].add_assign(&da);
                }
                Op::Embedding { table, ids } => {
                    let cols = self.nodes[table.0].value.shape()[1];
                    let mut dt = Tensor::zeros(self.nodes[table.0].value.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            dt.data_mut()[id * cols + c] += g.get2(r, c);
                        }
                    }
                    grads[table.0].add_assign(&dt);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let xv = &self.nodes[x.0].value;
                    let gv = &self.nodes[gain.0].value;
                    let (rows, cols) = xv.dims2()?;
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    let mut dgain = Tensor::zeros(gv.shape());
                    let mut dbias = Tensor::zeros(gv.shape());
                    for r in 0..rows {
                        let row = xv.row(r);
                        let mean = row.iter().sum::<f64>() / cols as f64;
                        let var =
                            row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let mut dxhat = vec![0.0; cols];
                        let mut xhat = vec![0.0; cols];
                        for c in 0..cols {
                            xhat[c] = (row[c] - mean) * inv;
                            dxhat[c] = g.get2(r, c) * gv.data()[c];
                            dgain.data_mut()[c] += g.get2(r, c) * xhat[c];
                            dbias.data_mut()[c] += g.get2(r, c);
                        }
                        let mean_dxhat = dxhat.iter().sum::<f64>() / cols as f64;
                        let mean_dxhat_xhat = dxhat
                            .iter()
                            .zip(&xhat)
                            .map(|(d, h)| d * h)
                            .sum::<f64>()
                            / cols as f64;
                        for c in 0..cols {
                            dx.set2(
                                r,
                                c,
                                inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat),
                            );
                        }
                    }
                    grads[x.0].add_assign(&dx);
                    grads[gain.0].add_assign(&dgain);
                    grads[bias.0].add_assign(&dbias);
                }
                Op::Conv1dSame { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    let (len, c_in) = xv.dims2()?;
                    let (c_out, k) = (wv.shape()[0], wv.shape()[2]);
                    let pad = k / 2;
                    let mut dx = Tensor::zeros(&[len, c_in]);
                    let mut dw = Tensor::zeros(wv.shape());
                    let mut db = Tensor::zeros(self.nodes[b.0].value.shape());
                    for l in 0..len {
                        for co in 0..c_out {
                            let gy = g.get2(l, co);
                            if gy == 0.0 {
                                continue;
                            }
                            db.data_mut()[co] += gy;
                            for dk in 0..k {
                                let src = l as isize + dk as isize - pad as isize;
                                if src < 0 || src >= len as isize {
                                    continue;
                                }
                                let src = src as usize;
                                for ci in 0..c_in {
                                    let widx = (co * c_in + ci) * k + dk;
                                    dw.data_mut()[widx] += gy * xv.get2(src, ci);
                                    dx.data_mut()[src * c_in + ci] += gy * wv.data()[widx];
                                }
                            }
                        }
                    }
                    grads[x.0].add_assign(&dx);
                    grads[w.0].add_assign(&dw);
                    grads[b.0].add_assign(&db);
                }
                Op::Dropout { x, mask } => {
                    grads[x.0].add_assign(&g.zip(mask, |gv, m| gv * m)?);
                }
                Op::Reshape(x) => {
                    let back = Tensor::new(
                        self.nodes[x.0].value.shape().to_vec(),
                        g.data().to_vec(),
                    )?;
                    grads[x.0].add_assign(&back);
                }
                Op::SliceRows { x, start, len } => {
                    let (_, cols) = self.nodes[x.0].value.dims2()?;
                    let mut dx = Tensor::zeros(self.nodes[x.0].value.shape());
                    for r in 0..*len {
                        for c in 0..cols {
                            dx.data_mut()[(start + r) * cols + c] = g.get2(r, c);
                        }
                    }
                    grads[x.0].add_assign(&dx);
                }
                Op::SliceCols { x, start, len } => {
                    let (rows, cols) = self.nodes[x.0].value.dims2()?;
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        for c in 0..*len {
                            dx.data_mut()[r * cols + start + c] = g.get2(r, c);
                        }
                    }
                    grads[x.0].add_assign(&dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.nodes[p.0].value.dims2()?;
                        let mut dp = Tensor::zeros(&[rows, cols]);
                        for r in 0..rows {
                            for c in 0..cols {
                                dp.set2(r, c, g.get2(r, offset + c));
                            }
                        }
                        grads[p.0].add_assign(&dp);
                        offset += cols;
                    }
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[i].value;
                    let (rows, cols) = y.dims2()?;
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let dot: f64 = (0..cols).map(|c| g.get2(r, c) * y.get2(r, c)).sum();
                        for c in 0..cols {
                            dx.set2(r, c, y.get2(r, c) * (g.get2(r, c) - dot));
                        }
                    }
                    grads[x.0].add_assign(&dx);
                }
                Op::Sum(x) => {
                    let gv = g.scalar_value();
                    grads[x.0].add_assign(&Tensor::full(self.nodes[x.0].value.shape(), gv));
                }
                Op::Mean(x) => {
                    let n = self.nodes[x.0].value.numel() as f64;
                    let gv = g.scalar_value() / n;
                    grads[x.0].add_assign(&Tensor::full(self.nodes[x.0].value.shape(), gv));
                }
                Op::CeSmoothed { logits, target } => {
                    let xv = &self.nodes[logits.0].value;
                    let (rows, cols) = xv.dims2()?;
                    let gv = g.scalar_value();
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let row = xv.row(r);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&v| (v - m).exp()).sum();
                        for c in 0..cols {
                            let p = (row[c] - m).exp() / denom;
                            dx.set2(r, c, gv * (p - target.get2(r, c)));
                        }
                    }
                    grads[logits.0].add_assign(&dx);
                }
            }
        }
        Ok(grads)
    }

    /// Backward sweep that accumulates parameter gradients into the store.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<(), NumError> {
        let grads = self.backward(loss)?;
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let Op::Param(idx) = node.op {
                store.params[idx].grad.add_assign(&grad);
            }
        }
        Ok(())
    }
}

fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x.powi(3))).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    let inner = SQRT_2_OVER_PI * (x + 0.044715 * x.powi(3));
    let t = inner.tanh();
    let dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Max relative error between reverse-mode gradients and central finite
/// differences of `f` over every parameter in `store`.
///
/// `f` must rebuild its forward pass from the store on every call (the tape
/// it is handed is fresh each time). `coords_per_param` caps how many
/// coordinates of each parameter are probed; `None` probes all of them.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut f: F,
    h: f64,
    coords_per_param: Option<usize>,
    seed: u64,
) -> Result<f64, NumError>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var, NumError>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(store, &mut tape)?;
    tape.backward_into(loss, store)?;
    let analytic: Vec<Tensor> = store.iter().map(|p| p.grad.clone()).collect();

    let mut eval = |store: &ParamStore| -> Result<f64, NumError> {
        let mut tape = Tape::new();
        let loss = f(store, &mut tape)?;
        Ok(tape.value(loss).scalar_value())
    };

    let mut pick = Rng::new(seed);
    let mut worst = 0.0f64;
    for pi in 0..store.len() {
        let numel = store.value(pi).numel();
        let coords: Vec<usize> = match coords_per_param {
            Some(k) if k < numel => (0..k).map(|_| pick.next_below(numel)).collect(),
            _ => (0..numel).collect(),
        };
        for ci in coords {
            let orig = store.value(pi).data()[ci];
            store.value_mut(pi).data_mut()[ci] = orig + h;
            let up = eval(store)?;
            store.value_mut(pi).data_mut()[ci] = orig - h;
            let down = eval(store)?;
            store.value_mut(pi).data_mut()[ci] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[ci];
            let scale = a.abs().max(numeric.abs());
            // Near-zero gradients drown in finite-difference roundoff, so
            // they are held to the absolute tolerance instead.
            let err = if scale < 1e-6 {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
