//! Reverse-mode gradients on a flat tape.
//!
//! Every forward step appends a node holding its output tensor and an op
//! record naming its input nodes; [`Tape::backward`] walks the nodes in
//! reverse, accumulating gradients into each node's grad slot. Parameters
//! enter the tape once per forward pass (repeat uses share the node, so
//! their gradients sum correctly) and [`Tape::param_grads`] hands the
//! results back keyed by [`ParamId`].
//!
//! The op set is exactly what the encoders in this crate need; there is no
//! general graph machinery, broadcasting, or shape inference beyond it.

use crate::error::{Error, Result};
use crate::params::{GradMap, ParamId, ParamSet};
use crate::rng::Rng;
use crate::tensor::{self, Mode, Tensor};

pub type VarId = usize;

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    /// One row of a matrix as a vector.
    Row { m: VarId, idx: usize },
    MatMul { a: VarId, b: VarId },
    /// a x b^T without materializing the transpose.
    MatMulTransposeB { a: VarId, b: VarId },
    MatVec { a: VarId, v: VarId },
    Add { a: VarId, b: VarId },
    Sub { a: VarId, b: VarId },
    Mul { a: VarId, b: VarId },
    OneMinus { x: VarId },
    /// Matrix plus a bias vector added to every row.
    AddRowBroadcast { m: VarId, bias: VarId },
    Tanh { x: VarId },
    Sigmoid { x: VarId },
    Softmax { x: VarId },
    /// Three-segment max pooling; winning row per output slot is recorded
    /// so backward can route gradient to it (first row wins ties).
    PiecewiseMaxPool { x: VarId, argmax: Vec<usize> },
    /// Row j scaled by s[j].
    ScaleRows { m: VarId, s: VarId },
    Concat { parts: Vec<VarId> },
    /// Equal-length vectors stacked into a matrix, one per row.
    StackRows { rows: Vec<VarId> },
    /// Each row of m extended with a copy of v.
    ConcatColsBroadcast { m: VarId, v: VarId },
    /// Sliding zero-padded windows flattened per row, the lowering that
    /// turns a 1-d convolution into one matmul.
    Im2Col { x: VarId, window: usize },
    /// Per-token concat of word and two position embeddings. The pad row of
    /// the word table never receives gradient, keeping it frozen at zero.
    Embed {
        word: VarId,
        pos1: VarId,
        pos2: VarId,
        word_ids: Vec<usize>,
        pos1_ids: Vec<usize>,
        pos2_ids: Vec<usize>,
        pad_id: usize,
    },
    /// Mean of a set of table rows (multi-token entity embedding).
    EmbedAvg { table: VarId, ids: Vec<usize> },
    /// Inverted dropout; the saved mask is already scaled by 1/(1-rate).
    Dropout { x: VarId, mask: Vec<f64> },
    /// One coordinate of a vector as a scalar.
    Pick { x: VarId, idx: usize },
    NegLog { x: VarId },
    SumAll { x: VarId },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<(ParamId, VarId)>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: VarId) -> &Tensor {
        &self.nodes[v].value
    }

    /// Gradient of the last backward pass w.r.t. node `v`, if it received any.
    pub fn grad(&self, v: VarId) -> Option<&[f64]> {
        self.nodes[v].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, t: Tensor) -> VarId {
        self.push(t, Op::Leaf)
    }

    pub fn zeros(&mut self, len: usize) -> VarId {
        self.leaf(Tensor::zeros(vec![len]))
    }

    /// Bind a parameter to the tape, cloning its current value. Repeat calls
    /// for the same parameter return the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> VarId {
        if let Some(&(_, var)) = self.param_vars.iter().find(|(p, _)| *p == id) {
            return var;
        }
        let var = self.push(params.value(id).clone(), Op::Param);
        self.param_vars.push((id, var));
        var
    }

    pub fn row(&mut self, m: VarId, idx: usize) -> Result<VarId> {
        let mt = self.value(m);
        if mt.rank() != 2 || idx >= mt.rows() {
            return Err(Error::Index {
                op: "tape.row",
                index: idx,
                len: mt.rows(),
            });
        }
        let v = Tensor::vector(mt.row(idx).to_vec());
        Ok(self.push(v, Op::Row { m, idx }))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul { a, b }))
    }

    pub fn matmul_transpose_b(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::matmul_transpose_b(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulTransposeB { a, b }))
    }

    pub fn matvec(&mut self, a: VarId, v: VarId) -> Result<VarId> {
        let out = tensor::matvec(self.value(a), self.value(v))?;
        Ok(self.push(out, Op::MatVec { a, v }))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let out = tensor::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn one_minus(&mut self, x: VarId) -> VarId {
        let out = tensor::one_minus(self.value(x));
        self.push(out, Op::OneMinus { x })
    }

    pub fn add_row_broadcast(&mut self, m: VarId, bias: VarId) -> Result<VarId> {
        let (mt, bt) = (self.value(m), self.value(bias));
        if mt.rank() != 2 || bt.rank() != 1 || mt.cols() != bt.len() {
            return Err(Error::ShapeMismatch {
                op: "add_row_broadcast",
                left: mt.shape().to_vec(),
                right: bt.shape().to_vec(),
            });
        }
        let (rows, cols) = (mt.rows(), mt.cols());
        let mut data = mt.data().to_vec();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += bt.data()[c];
            }
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::AddRowBroadcast { m, bias }))
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        let out = tensor::tanh(self.value(x));
        self.push(out, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let out = tensor::sigmoid(self.value(x));
        self.push(out, Op::Sigmoid { x })
    }

    pub fn softmax(&mut self, x: VarId) -> Result<VarId> {
        let out = tensor::softmax(self.value(x))?;
        Ok(self.push(out, Op::Softmax { x }))
    }

    pub fn piecewise_max_pool(&mut self, x: VarId, lo: usize, hi: usize) -> Result<VarId> {
        let (out, argmax) = tensor::piecewise_max_pool(self.value(x), lo, hi)?;
        Ok(self.push(out, Op::PiecewiseMaxPool { x, argmax }))
    }

    pub fn scale_rows(&mut self, m: VarId, s: VarId) -> Result<VarId> {
        let (mt, st) = (self.value(m), self.value(s));
        if mt.rank() != 2 || st.rank() != 1 || mt.rows() != st.len() {
            return Err(Error::ShapeMismatch {
                op: "scale_rows",
                left: mt.shape().to_vec(),
                right: st.shape().to_vec(),
            });
        }
        let (rows, cols) = (mt.rows(), mt.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let w = st.data()[r];
            data.extend(mt.row(r).iter().map(|&v| v * w));
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(out, Op::ScaleRows { m, s }))
    }

    pub fn concat(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::domain("tape.concat", "no parts"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "tape.concat",
                    left: t.shape().to_vec(),
                    right: vec![],
                });
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::vector(data);
        Ok(self.push(out, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn stack_rows(&mut self, rows: &[VarId]) -> Result<VarId> {
        if rows.is_empty() {
            return Err(Error::domain("tape.stack_rows", "no rows"));
        }
        let width = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != width {
                return Err(Error::ShapeMismatch {
                    op: "tape.stack_rows",
                    left: vec![width],
                    right: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows.len(), width], data)?;
        Ok(self.push(out, Op::StackRows { rows: rows.to_vec() }))
    }

    pub fn concat_cols_broadcast(&mut self, m: VarId, v: VarId) -> Result<VarId> {
        let (mt, vt) = (self.value(m), self.value(v));
        if mt.rank() != 2 || vt.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "concat_cols_broadcast",
                left: mt.shape().to_vec(),
                right: vt.shape().to_vec(),
            });
        }
        let (rows, d, k) = (mt.rows(), mt.cols(), vt.len());
        let mut data = Vec::with_capacity(rows * (d + k));
        for r in 0..rows {
            data.extend_from_slice(mt.row(r));
            data.extend_from_slice(vt.data());
        }
        let out = Tensor::new(vec![rows, d + k], data)?;
        Ok(self.push(out, Op::ConcatColsBroadcast { m, v }))
    }

    pub fn im2col(&mut self, x: VarId, window: usize) -> Result<VarId> {
        let xt = self.value(x);
        if xt.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "im2col",
                left: xt.shape().to_vec(),
                right: vec![],
            });
        }
        if window == 0 || window % 2 == 0 {
            return Err(Error::domain(
                "im2col",
                format!("window {window} must be odd"),
            ));
        }
        let (rows, d) = (xt.rows(), xt.cols());
        let pad = window / 2;
        let mut data = vec![0.0; rows * window * d];
        for j in 0..rows {
            for t in 0..window {
                let src = j as isize + t as isize - pad as isize;
                if src < 0 || src >= rows as isize {
                    continue;
                }
                let src_row = xt.row(src as usize);
                let dst = j * window * d + t * d;
                data[dst..dst + d].copy_from_slice(src_row);
            }
        }
        let out = Tensor::new(vec![rows, window * d], data)?;
        Ok(self.push(out, Op::Im2Col { x, window }))
    }

    /// Token sequence to `[len, d_w + 2*d_p]` by concatenating, per token,
    /// its word embedding and the two relative-position embeddings.
    pub fn embed(
        &mut self,
        word: VarId,
        pos1: VarId,
        pos2: VarId,
        word_ids: &[usize],
        pos1_ids: &[usize],
        pos2_ids: &[usize],
        pad_id: usize,
    ) -> Result<VarId> {
        let (wt, p1t, p2t) = (self.value(word), self.value(pos1), self.value(pos2));
        if wt.rank() != 2 || p1t.rank() != 2 || p2t.rank() != 2 || p1t.shape() != p2t.shape() {
            return Err(Error::ShapeMismatch {
                op: "embed",
                left: wt.shape().to_vec(),
                right: p1t.shape().to_vec(),
            });
        }
        let m = word_ids.len();
        if m == 0 || pos1_ids.len() != m || pos2_ids.len() != m {
            return Err(Error::domain("embed", "empty or unequal id sequences"));
        }
        let (d_w, d_p) = (wt.cols(), p1t.cols());
        let mut data = Vec::with_capacity(m * (d_w + 2 * d_p));
        for j in 0..m {
            let (wid, p1, p2) = (word_ids[j], pos1_ids[j], pos2_ids[j]);
            if wid >= wt.rows() {
                return Err(Error::Index {
                    op: "embed.word",
                    index: wid,
                    len: wt.rows(),
                });
            }
            if p1 >= p1t.rows() || p2 >= p2t.rows() {
                return Err(Error::Index {
                    op: "embed.position",
                    index: p1.max(p2),
                    len: p1t.rows(),
                });
            }
            data.extend_from_slice(wt.row(wid));
            data.extend_from_slice(p1t.row(p1));
            data.extend_from_slice(p2t.row(p2));
        }
        let out = Tensor::new(vec![m, d_w + 2 * d_p], data)?;
        Ok(self.push(
            out,
            Op::Embed {
                word,
                pos1,
                pos2,
                word_ids: word_ids.to_vec(),
                pos1_ids: pos1_ids.to_vec(),
                pos2_ids: pos2_ids.to_vec(),
                pad_id,
            },
        ))
    }

    pub fn embed_avg(&mut self, table: VarId, ids: &[usize]) -> Result<VarId> {
        let tt = self.value(table);
        if tt.rank() != 2 || ids.is_empty() {
            return Err(Error::domain("embed_avg", "need a matrix table and ids"));
        }
        let d = tt.cols();
        let mut acc = vec![0.0; d];
        for &id in ids {
            if id >= tt.rows() {
                return Err(Error::Index {
                    op: "embed_avg",
                    index: id,
                    len: tt.rows(),
                });
            }
            for (a, v) in acc.iter_mut().zip(tt.row(id)) {
                *a += v;
            }
        }
        let n = ids.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(self.push(
            Tensor::vector(acc),
            Op::EmbedAvg {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// In eval mode (or at rate zero) this is the identity and records
    /// nothing. In train mode it consumes randomness from `rng`.
    pub fn dropout(&mut self, x: VarId, rate: f64, mode: Mode, rng: &mut Rng) -> Result<VarId> {
        let (out, mask) = tensor::dropout(self.value(x), rate, mode, rng)?;
        match mask {
            None => Ok(x),
            Some(mask) => Ok(self.push(out, Op::Dropout { x, mask })),
        }
    }

    pub fn pick(&mut self, x: VarId, idx: usize) -> Result<VarId> {
        let xt = self.value(x);
        if xt.rank() != 1 || idx >= xt.len() {
            return Err(Error::Index {
                op: "tape.pick",
                index: idx,
                len: xt.len(),
            });
        }
        let v = Tensor::scalar(xt.data()[idx]);
        Ok(self.push(v, Op::Pick { x, idx }))
    }

    pub fn neg_log(&mut self, x: VarId) -> Result<VarId> {
        let xt = self.value(x);
        if xt.len() != 1 {
            return Err(Error::domain("neg_log", "expects a scalar"));
        }
        let v = xt.data()[0];
        if v <= 0.0 {
            return Err(Error::domain("neg_log", format!("non-positive input {v}")));
        }
        Ok(self.push(Tensor::scalar(-v.ln()), Op::NegLog { x }))
    }

    pub fn sum_all(&mut self, x: VarId) -> VarId {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll { x })
    }

    /// Backpropagate from a scalar loss node, filling the grad slot of every
    /// node on the path (parameters included).
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::domain("tape.backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);

        for i in (0..=loss).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backward_step(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            match g {
                Some(g) => node.value.set_grad(g),
                None => node.value.clear_grad(),
            }
        }
        Ok(())
    }

    /// Gradients of all parameters bound to this tape, after `backward`.
    pub fn param_grads(&self) -> GradMap {
        let mut out = Vec::new();
        for &(pid, var) in &self.param_vars {
            if let Some(g) = self.nodes[var].value.grad() {
                out.push((pid, g.to_vec()));
            }
        }
        GradMap(out)
    }

    /// Fold this tape's parameter gradients into `params` (+=).
    pub fn accumulate_param_grads(&self, params: &mut ParamSet) {
        params.accumulate(&self.param_grads());
    }

    fn backward_step(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let add_to = |grads: &mut [Option<Vec<f64>>], v: VarId, f: &mut dyn FnMut(&mut [f64])| {
            let slot = grads[v].get_or_insert_with(|| vec![0.0; self.nodes[v].value.len()]);
            f(slot);
        };
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Row { m, idx } => {
                let w = g.len();
                add_to(grads, *m, &mut |d| {
                    for (k, gv) in g.iter().enumerate() {
                        d[idx * w + k] += gv;
                    }
                });
            }
            Op::MatMul { a, b } => {
                let (at, bt) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (at.rows(), at.cols(), bt.cols());
                add_to(grads, *a, &mut |d| {
                    for i in 0..m {
                        for t in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * bt.at(t, j);
                            }
                            d[i * k + t] += acc;
                        }
                    }
                });
                add_to(grads, *b, &mut |d| {
                    for t in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += at.at(i, t) * g[i * n + j];
                            }
                            d[t * n + j] += acc;
                        }
                    }
                });
            }
            Op::MatMulTransposeB { a, b } => {
                let (at, bt) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (at.rows(), at.cols(), bt.rows());
                add_to(grads, *a, &mut |d| {
                    for i in 0..m {
                        for t in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * bt.at(j, t);
                            }
                            d[i * k + t] += acc;
                        }
                    }
                });
                add_to(grads, *b, &mut |d| {
                    for j in 0..n {
                        for t in 0..k {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += g[i * n + j] * at.at(i, t);
                            }
                            d[j * k + t] += acc;
                        }
                    }
                });
            }
            Op::MatVec { a, v } => {
                let (at, vt) = (&self.nodes[*a].value, &self.nodes[*v].value);
                let (m, k) = (at.rows(), at.cols());
                add_to(grads, *a, &mut |d| {
                    for i in 0..m {
                        for j in 0..k {
                            d[i * k + j] += g[i] * vt.data()[j];
                        }
                    }
                });
                add_to(grads, *v, &mut |d| {
                    for j in 0..k {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += at.at(i, j) * g[i];
                        }
                        d[j] += acc;
                    }
                });
            }
            Op::Add { a, b } => {
                add_to(grads, *a, &mut |d| axpy(d, g, 1.0));
                add_to(grads, *b, &mut |d| axpy(d, g, 1.0));
            }
            Op::Sub { a, b } => {
                add_to(grads, *a, &mut |d| axpy(d, g, 1.0));
                add_to(grads, *b, &mut |d| axpy(d, g, -1.0));
            }
            Op::Mul { a, b } => {
                let (at, bt) = (&self.nodes[*a].value, &self.nodes[*b].value);
                add_to(grads, *a, &mut |d| {
                    for ((d, gv), bv) in d.iter_mut().zip(g).zip(bt.data()) {
                        *d += gv * bv;
                    }
                });
                add_to(grads, *b, &mut |d| {
                    for ((d, gv), av) in d.iter_mut().zip(g).zip(at.data()) {
                        *d += gv * av;
                    }
                });
            }
            Op::OneMinus { x } => {
                add_to(grads, *x, &mut |d| axpy(d, g, -1.0));
            }
            Op::AddRowBroadcast { m, bias } => {
                let cols = self.nodes[*bias].value.len();
                add_to(grads, *m, &mut |d| axpy(d, g, 1.0));
                add_to(grads, *bias, &mut |d| {
                    for (i, gv) in g.iter().enumerate() {
                        d[i % cols] += gv;
                    }
                });
            }
            Op::Tanh { x } => {
                let y = &self.nodes[i].value;
                add_to(grads, *x, &mut |d| {
                    for ((d, gv), yv) in d.iter_mut().zip(g).zip(y.data()) {
                        *d += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Sigmoid { x } => {
                let y = &self.nodes[i].value;
                add_to(grads, *x, &mut |d| {
                    for ((d, gv), yv) in d.iter_mut().zip(g).zip(y.data()) {
                        *d += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softmax { x } => {
                let y = self.nodes[i].value.data();
                let s: f64 = g.iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                add_to(grads, *x, &mut |d| {
                    for ((d, gv), yv) in d.iter_mut().zip(g).zip(y) {
                        *d += yv * (gv - s);
                    }
                });
            }
            Op::PiecewiseMaxPool { x, argmax } => {
                let channels = g.len() / 3;
                add_to(grads, *x, &mut |d| {
                    for (slot, &row) in argmax.iter().enumerate() {
                        d[row * channels + slot % channels] += g[slot];
                    }
                });
            }
            Op::ScaleRows { m, s } => {
                let (mt, st) = (&self.nodes[*m].value, &self.nodes[*s].value);
                let cols = mt.cols();
                add_to(grads, *m, &mut |d| {
                    for (idx, gv) in g.iter().enumerate() {
                        d[idx] += gv * st.data()[idx / cols];
                    }
                });
                add_to(grads, *s, &mut |d| {
                    for (idx, gv) in g.iter().enumerate() {
                        d[idx / cols] += gv * mt.data()[idx];
                    }
                });
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.nodes[p].value.len();
                    let piece = &g[off..off + n];
                    add_to(grads, p, &mut |d| axpy(d, piece, 1.0));
                    off += n;
                }
            }
            Op::StackRows { rows } => {
                let w = self.nodes[rows[0]].value.len();
                for (j, &r) in rows.iter().enumerate() {
                    let piece = &g[j * w..(j + 1) * w];
                    add_to(grads, r, &mut |d| axpy(d, piece, 1.0));
                }
            }
            Op::ConcatColsBroadcast { m, v } => {
                let mt = &self.nodes[*m].value;
                let (rows, d_cols) = (mt.rows(), mt.cols());
                let k = self.nodes[*v].value.len();
                let w = d_cols + k;
                add_to(grads, *m, &mut |d| {
                    for r in 0..rows {
                        for c in 0..d_cols {
                            d[r * d_cols + c] += g[r * w + c];
                        }
                    }
                });
                add_to(grads, *v, &mut |d| {
                    for r in 0..rows {
                        for q in 0..k {
                            d[q] += g[r * w + d_cols + q];
                        }
                    }
                });
            }
            Op::Im2Col { x, window } => {
                let xt = &self.nodes[*x].value;
                let (rows, d_cols) = (xt.rows(), xt.cols());
                let pad = window / 2;
                add_to(grads, *x, &mut |d| {
                    for j in 0..rows {
                        for t in 0..*window {
                            let src = j as isize + t as isize - pad as isize;
                            if src < 0 || src >= rows as isize {
                                continue;
                            }
                            let gsrc = j * window * d_cols + t * d_cols;
                            let dsrc = src as usize * d_cols;
                            for q in 0..d_cols {
                                d[dsrc + q] += g[gsrc + q];
                            }
                        }
                    }
                });
            }
            Op::Embed {
                word,
                pos1,
                pos2,
                word_ids,
                pos1_ids,
                pos2_ids,
                pad_id,
            } => {
                let d_w = self.nodes[*word].value.cols();
                let d_p = self.nodes[*pos1].value.cols();
                let width = d_w + 2 * d_p;
                add_to(grads, *word, &mut |d| {
                    for (j, &wid) in word_ids.iter().enumerate() {
                        if wid == *pad_id {
                            continue;
                        }
                        for q in 0..d_w {
                            d[wid * d_w + q] += g[j * width + q];
                        }
                    }
                });
                add_to(grads, *pos1, &mut |d| {
                    for (j, &p) in pos1_ids.iter().enumerate() {
                        for q in 0..d_p {
                            d[p * d_p + q] += g[j * width + d_w + q];
                        }
                    }
                });
                add_to(grads, *pos2, &mut |d| {
                    for (j, &p) in pos2_ids.iter().enumerate() {
                        for q in 0..d_p {
                            d[p * d_p + q] += g[j * width + d_w + d_p + q];
                        }
                    }
                });
            }
            Op::EmbedAvg { table, ids } => {
                let d_cols = self.nodes[*table].value.cols();
                let n = ids.len() as f64;
                add_to(grads, *table, &mut |d| {
                    for &id in ids {
                        for q in 0..d_cols {
                            d[id * d_cols + q] += g[q] / n;
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                add_to(grads, *x, &mut |d| {
                    for ((d, gv), mv) in d.iter_mut().zip(g).zip(mask) {
                        *d += gv * mv;
                    }
                });
            }
            Op::Pick { x, idx } => {
                add_to(grads, *x, &mut |d| d[*idx] += g[0]);
            }
            Op::NegLog { x } => {
                let xv = self.nodes[*x].value.data()[0];
                add_to(grads, *x, &mut |d| d[0] += -g[0] / xv);
            }
            Op::SumAll { x } => {
                add_to(grads, *x, &mut |d| {
                    for d in d.iter_mut() {
                        *d += g[0];
                    }
                });
            }
        }
    }
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}
