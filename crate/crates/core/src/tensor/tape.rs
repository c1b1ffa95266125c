use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{dot, matvec_into, sigmoid, softmax_with_temperature, Result, Tensor, TensorError};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Outer(usize, usize),
    ContractLast(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize, f64),
    CrossEntropy {
        logits: usize,
        target: usize,
        probs: Vec<f64>,
    },
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Row(usize, usize),
    Reshape(usize),
    Transpose(usize),
    Sum(usize),
    AddN(Vec<usize>),
    Dot(usize, usize),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of tensor operations for reverse-mode differentiation.
///
/// Values may be owned or borrowed for the tape's lifetime `'a`, which is how
/// model parameters are bound without copying. A tape and its vars are a
/// single-threaded unit; independent tapes can run on separate threads.
#[derive(Debug)]
pub struct Tape<'a> {
    id: u64,
    nodes: Vec<Node<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// Records a borrowed value, e.g. a model parameter.
    pub fn leaf_ref(&mut self, value: &'a Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Value held by `v`. Panics if `v` belongs to another tape.
    pub fn value(&self, v: Var) -> &Tensor {
        let i = self.check(v).expect("var recorded on a different tape");
        &self.nodes[i].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v).map(|i| self.nodes[i].requires_grad).unwrap_or(false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        Ok(self.derived(out, Op::MatMul(ia, ib), &[ia, ib]))
    }

    pub fn outer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.nodes[ia].value.outer(&self.nodes[ib].value)?;
        Ok(self.derived(out, Op::Outer(ia, ib), &[ia, ib]))
    }

    pub fn contract_last(&mut self, t: Var, v: Var) -> Result<Var> {
        let (it, iv) = (self.check(t)?, self.check(v)?);
        let out = self.nodes[it].value.contract_last(&self.nodes[iv].value)?;
        Ok(self.derived(out, Op::ContractLast(it, iv), &[it, iv]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.nodes[ia].value.add(&self.nodes[ib].value)?;
        Ok(self.derived(out, Op::Add(ia, ib), &[ia, ib]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.nodes[ia].value.sub(&self.nodes[ib].value)?;
        Ok(self.derived(out, Op::Sub(ia, ib), &[ia, ib]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = self.nodes[ia].value.mul(&self.nodes[ib].value)?;
        Ok(self.derived(out, Op::Mul(ia, ib), &[ia, ib]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.scale(s);
        Ok(self.derived(out, Op::Scale(ia, s), &[ia]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.map(sigmoid);
        Ok(self.derived(out, Op::Sigmoid(ia), &[ia]))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.map(f64::tanh);
        Ok(self.derived(out, Op::Tanh(ia), &[ia]))
    }

    pub fn softmax(&mut self, logits: Var, temperature: f64) -> Result<Var> {
        let il = self.check(logits)?;
        self.nodes[il].value.as_vector("softmax")?;
        let probs = softmax_with_temperature(self.nodes[il].value.data(), temperature)?;
        Ok(self.derived(Tensor::vector(probs), Op::Softmax(il, temperature), &[il]))
    }

    /// `−log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let il = self.check(logits)?;
        let z = &self.nodes[il].value;
        z.as_vector("cross_entropy")?;
        let loss = super::cross_entropy(z.data(), target)?;
        let probs = softmax_with_temperature(z.data(), 1.0)?;
        Ok(self.derived(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: il,
                target,
                probs,
            },
            &[il],
        ))
    }

    /// Joins vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let mut data = Vec::new();
        for &i in &idx {
            let t = &self.nodes[i].value;
            t.as_vector("concat")?;
            data.extend_from_slice(t.data());
        }
        Ok(self.derived(Tensor::vector(data), Op::Concat(idx.clone()), &idx))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let idx = rows.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let Some(&first) = idx.first() else {
            return Err(TensorError::Parameter("stack of zero rows".into()));
        };
        let width = self.nodes[first].value.as_vector("stack")?;
        let mut data = Vec::with_capacity(idx.len() * width);
        for &i in &idx {
            let t = &self.nodes[i].value;
            if t.as_vector("stack")? != width {
                return Err(TensorError::Dimension {
                    op: "stack",
                    lhs: vec![width],
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![idx.len(), width], data)?;
        Ok(self.derived(out, Op::Stack(idx.clone()), &idx))
    }

    /// Row `r` of a matrix, e.g. an embedding lookup.
    pub fn row(&mut self, matrix: Var, r: usize) -> Result<Var> {
        let im = self.check(matrix)?;
        let out = Tensor::vector(self.nodes[im].value.row(r)?.to_vec());
        Ok(self.derived(out, Op::Row(im, r), &[im]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.as_ref().clone().reshape(shape)?;
        Ok(self.derived(out, Op::Reshape(ia), &[ia]))
    }

    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        self.reshape(a, &[n])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.nodes[ia].value.transpose()?;
        Ok(self.derived(out, Op::Transpose(ia), &[ia]))
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let out = Tensor::scalar(self.nodes[ia].value.sum());
        Ok(self.derived(out, Op::Sum(ia), &[ia]))
    }

    /// Elementwise sum of equally shaped values.
    pub fn add_n(&mut self, terms: &[Var]) -> Result<Var> {
        let idx = terms.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let Some(&first) = idx.first() else {
            return Err(TensorError::Parameter("add_n of zero terms".into()));
        };
        let mut out = self.nodes[first].value.as_ref().clone();
        for &i in &idx[1..] {
            out.add_assign(&self.nodes[i].value)?;
        }
        Ok(self.derived(out, Op::AddN(idx.clone()), &idx))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let out = Tensor::scalar(self.nodes[ia].value.dot(&self.nodes[ib].value)?);
        Ok(self.derived(out, Op::Dot(ia, ib), &[ia, ib]))
    }

    /// Replays the tape backward from a scalar `loss`.
    ///
    /// Every leaf recorded with `requires_grad` receives a gradient, zero when
    /// the loss does not depend on it. Multiple uses of a value accumulate.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.check(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(
                self.nodes[root].value.shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        if self.nodes[root].requires_grad {
            grads[root] = Some(vec![1.0]);
        }
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if !matches!(n.op, Op::Leaf) || !n.requires_grad {
                    return None;
                }
                let data = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; n.value.len()]);
                Some(Tensor {
                    shape: n.value.shape().to_vec(),
                    data,
                })
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads: leaves,
        })
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |i: usize| -> &Tensor { &self.nodes[i].value };
        let mut acc = |i: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[i].requires_grad {
                return;
            }
            let buf = grads[i].get_or_insert_with(|| vec![0.0; self.nodes[i].value.len()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) | Op::ContractLast(a, b) => {
                let (a, b) = (*a, *b);
                let (ta, tb) = (val(a), val(b));
                let (m, k, n) = if matches!(node.op, Op::ContractLast(..)) {
                    let k = tb.len();
                    (ta.len() / k.max(1), k, 1)
                } else {
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    (m, k, if tb.rank() == 1 { 1 } else { tb.shape()[1] })
                };
                if self.wants(a) {
                    // dA = G · Bᵀ
                    acc(a, &mut |da| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let darow = &mut da[i * k..(i + 1) * k];
                            if n == 1 {
                                let gi = grow[0];
                                if gi != 0.0 {
                                    for (d, bv) in darow.iter_mut().zip(tb.data()) {
                                        *d += gi * bv;
                                    }
                                }
                            } else {
                                for (p, d) in darow.iter_mut().enumerate() {
                                    *d += dot(grow, &tb.data()[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    });
                }
                if self.wants(b) {
                    // dB = Aᵀ · G
                    acc(b, &mut |db| {
                        for i in 0..m {
                            let arow = &ta.data()[i * k..(i + 1) * k];
                            let grow = &g[i * n..(i + 1) * n];
                            for (p, &av) in arow.iter().enumerate() {
                                if av == 0.0 {
                                    continue;
                                }
                                for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *d += av * gv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Outer(a, b) => {
                let (a, b) = (*a, *b);
                let (ta, tb) = (val(a), val(b));
                let (m, n) = (ta.len(), tb.len());
                acc(a, &mut |da| {
                    let mut tmp = vec![0.0; m];
                    matvec_into(g, m, n, tb.data(), &mut tmp);
                    for (d, t) in da.iter_mut().zip(tmp) {
                        *d += t;
                    }
                });
                acc(b, &mut |db| {
                    for i in 0..m {
                        let ai = ta.data()[i];
                        for (d, gv) in db.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                            *d += ai * gv;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    for (x, gv) in d.iter_mut().zip(g) {
                        *x -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                acc(*a, &mut |d| {
                    for ((x, gv), bv) in d.iter_mut().zip(g).zip(tb.data()) {
                        *x += gv * bv;
                    }
                });
                acc(*b, &mut |d| {
                    for ((x, gv), av) in d.iter_mut().zip(g).zip(ta.data()) {
                        *x += gv * av;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |d| {
                for (x, gv) in d.iter_mut().zip(g) {
                    *x += s * gv;
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                for ((x, gv), s) in d.iter_mut().zip(g).zip(node.value.data()) {
                    *x += gv * s * (1.0 - s);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |d| {
                for ((x, gv), t) in d.iter_mut().zip(g).zip(node.value.data()) {
                    *x += gv * (1.0 - t * t);
                }
            }),
            Op::Softmax(a, temperature) => {
                let y = node.value.data();
                let gy = dot(g, y);
                acc(*a, &mut |d| {
                    for ((x, gv), yv) in d.iter_mut().zip(g).zip(y) {
                        *x += yv * (gv - gy) / temperature;
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let gs = g[0];
                acc(*logits, &mut |d| {
                    for (j, (x, p)) in d.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *x += gs * (p - onehot);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    acc(p, &mut |d| add_into(d, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::Stack(rows) => {
                for (r, &p) in rows.iter().enumerate() {
                    let len = val(p).len();
                    acc(p, &mut |d| add_into(d, &g[r * len..(r + 1) * len]));
                }
            }
            Op::Row(m, r) => {
                let cols = val(*m).shape()[1];
                acc(*m, &mut |d| add_into(&mut d[r * cols..(r + 1) * cols], g));
            }
            Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::Transpose(a) => {
                let (m, n) = (val(*a).shape()[0], val(*a).shape()[1]);
                acc(*a, &mut |d| {
                    for i in 0..m {
                        for j in 0..n {
                            d[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |d| {
                for x in d.iter_mut() {
                    *x += g[0];
                }
            }),
            Op::AddN(terms) => {
                for &t in terms {
                    acc(t, &mut |d| add_into(d, g));
                }
            }
            Op::Dot(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let gs = g[0];
                acc(*a, &mut |d| {
                    for (x, bv) in d.iter_mut().zip(tb.data()) {
                        *x += gs * bv;
                    }
                });
                acc(*b, &mut |d| {
                    for (x, av) in d.iter_mut().zip(ta.data()) {
                        *x += gs * av;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf recorded with `requires_grad`.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.index).and_then(Option::take)
    }
}
