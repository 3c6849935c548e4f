//! A small vector-valued reverse-mode tape.
//!
//! Nodes are evaluated eagerly when recorded; values live in one arena so
//! recording never allocates per node. [`Tape::backward`] walks the tape in
//! reverse and accumulates parameter gradients straight into the
//! [`ParameterStore`].

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named row-major matrix (vectors have one column) with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    tensors: Vec<Tensor>,
}

const CHECKPOINT_MAGIC: &[u8; 6] = b"TGCKP1";
const CHECKPOINT_VERSION: u16 = 1;

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "tensor `{name}` shape mismatch");
        assert!(self.find(name).is_none(), "duplicate tensor `{name}`");
        self.tensors.push(Tensor {
            name: name.to_string(),
            rows,
            cols,
            grad: vec![0.0; value.len()],
            value,
        });
        ParamId(self.tensors.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].grad
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// SHA-256 over names, shapes and value bits.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            h.update((t.rows as u64).to_le_bytes());
            h.update((t.cols as u64).to_le_bytes());
            for v in &t.value {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Versioned checkpoint: magic, version, config hash, then every tensor
    /// (`name`, `rows`, `cols`, little-endian `f64` values).
    pub fn write_checkpoint(&self, config_hash: u64, mut out: impl Write) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&config_hash.to_le_bytes())?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            out.write_all(&(t.name.len() as u32).to_le_bytes())?;
            out.write_all(t.name.as_bytes())?;
            out.write_all(&(t.rows as u32).to_le_bytes())?;
            out.write_all(&(t.cols as u32).to_le_bytes())?;
            for v in &t.value {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Returns the store and the config hash it was written with.
    pub fn read_checkpoint(mut input: impl Read) -> Result<(Self, u64)> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)
                .map_err(|e| Error::format("checkpoint", format!("truncated: {e}")))?;
            Ok(buf)
        }
        if &take::<6>(&mut input)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = u16::from_le_bytes(take(&mut input)?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let config_hash = u64::from_le_bytes(take(&mut input)?);
        let count = u32::from_le_bytes(take(&mut input)?) as usize;
        let mut store = ParameterStore::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(&mut input)?) as usize;
            let mut name = vec![0u8; name_len];
            input
                .read_exact(&mut name)
                .map_err(|e| Error::format("checkpoint", format!("truncated: {e}")))?;
            let name = String::from_utf8(name).map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
            let rows = u32::from_le_bytes(take(&mut input)?) as usize;
            let cols = u32::from_le_bytes(take(&mut input)?) as usize;
            let mut value = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                value.push(f64::from_le_bytes(take(&mut input)?));
            }
            store.add(&name, rows, cols, value);
        }
        Ok((store, config_hash))
    }
}

/// Handle to a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Clone, Copy, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Affine { w: ParamId, b: Option<ParamId>, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Mask { x: Var, off: usize },
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    Relu(Var),
    LogSigmoid(Var),
    TimeEncode { freq: ParamId, phase: ParamId, dt: f64 },
    Concat { start: usize, count: usize },
    Sum { start: usize, count: usize },
    Dot(Var, Var),
    Softmax(Var),
    WeightedSum { weights: Var, start: usize, count: usize },
    InfoNce { start: usize, count: usize, tau: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    children: Vec<Var>,
    aux: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable `ln(sigmoid(x))`.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Normalised rows, their original norms, and the loss of the symmetric
/// two-view InfoNCE objective over `2n` rows (`0..n` first view, `n..2n`
/// second view).
struct InfoNceParts {
    normed: Vec<Vec<f64>>,
    norms: Vec<f64>,
    /// Row-major `2n x 2n` softmax weights per anchor (zero on the diagonal).
    soft: Vec<f64>,
    loss: f64,
}

const NORM_FLOOR: f64 = 1e-12;

fn info_nce_parts(rows: &[&[f64]], tau: f64) -> InfoNceParts {
    let m = rows.len();
    let n = m / 2;
    let mut normed = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for r in rows {
        let norm = dot(r, r).sqrt();
        let d = norm.max(NORM_FLOOR);
        normed.push(r.iter().map(|x| x / d).collect::<Vec<f64>>());
        norms.push(norm);
    }
    let mut soft = vec![0.0; m * m];
    let mut loss = 0.0;
    let mut logits = vec![0.0; m];
    for a in 0..m {
        let partner = (a + n) % m;
        let mut max = f64::NEG_INFINITY;
        for b in 0..m {
            if b != a {
                logits[b] = dot(&normed[a], &normed[b]) / tau;
                max = max.max(logits[b]);
            }
        }
        let mut z = 0.0;
        for b in 0..m {
            if b != a {
                let e = (logits[b] - max).exp();
                soft[a * m + b] = e;
                z += e;
            }
        }
        for b in 0..m {
            soft[a * m + b] /= z;
        }
        loss += -(logits[partner] - max - z.ln());
    }
    InfoNceParts {
        normed,
        norms,
        soft,
        loss: loss / m as f64,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
        self.children.clear();
        self.aux.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0 as usize];
        &self.values[n.off..n.off + n.len]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let s = self.value(v);
        debug_assert_eq!(s.len(), 1);
        s[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0 as usize].len
    }

    fn node(&self, v: Var) -> Node {
        self.nodes[v.0 as usize]
    }

    fn range(&self, v: Var) -> std::ops::Range<usize> {
        let n = self.nodes[v.0 as usize];
        n.off..n.off + n.len
    }

    /// Appends a node of `len` values computed by `fill(inputs, out)`, where
    /// `inputs` is the value arena before this node.
    fn push(&mut self, op: Op, len: usize, fill: impl FnOnce(&[f64], &mut [f64], &[f64])) -> Var {
        let off = self.values.len();
        self.values.resize(off + len, 0.0);
        let (inp, out) = self.values.split_at_mut(off);
        fill(inp, out, &self.aux);
        self.nodes.push(Node { op, off, len });
        Var((self.nodes.len() - 1) as u32)
    }

    fn slice(inp: &[f64], n: Node) -> &[f64] {
        &inp[n.off..n.off + n.len]
    }

    pub fn input(&mut self, x: &[f64]) -> Var {
        self.push(Op::Input, x.len(), |_, out, _| out.copy_from_slice(x))
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.push(Op::Input, len, |_, _, _| {})
    }

    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        let v = store.value(id);
        self.push(Op::Param(id), v.len(), |_, out, _| out.copy_from_slice(v))
    }

    /// `W x + b`.
    pub fn affine(&mut self, store: &ParameterStore, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let t = store.tensor(w);
        let xn = self.node(x);
        assert_eq!(t.cols, xn.len, "affine `{}` expects {} inputs, got {}", t.name, t.cols, xn.len);
        let (rows, cols) = (t.rows, t.cols);
        let wv = &t.value;
        let bv = b.map(|b| store.value(b));
        self.push(Op::Affine { w, b, x }, rows, |inp, out, _| {
            let xs = Self::slice(inp, xn);
            for (r, o) in out.iter_mut().enumerate() {
                *o = dot(&wv[r * cols..(r + 1) * cols], xs) + bv.map_or(0.0, |b| b[r]);
            }
        })
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let an = self.node(a);
        self.push(op, an.len, |inp, out, _| {
            for (o, x) in out.iter_mut().zip(Self::slice(inp, an)) {
                *o = f(*x);
            }
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (an, bn) = (self.node(a), self.node(b));
        assert_eq!(an.len, bn.len);
        self.push(Op::Add(a, b), an.len, |inp, out, _| {
            for ((o, x), y) in out.iter_mut().zip(Self::slice(inp, an)).zip(Self::slice(inp, bn)) {
                *o = x + y;
            }
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (an, bn) = (self.node(a), self.node(b));
        assert_eq!(an.len, bn.len);
        self.push(Op::Mul(a, b), an.len, |inp, out, _| {
            for ((o, x), y) in out.iter_mut().zip(Self::slice(inp, an)).zip(Self::slice(inp, bn)) {
                *o = x * y;
            }
        })
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(Op::OneMinus(a), a, |x| 1.0 - x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::Scale(a, c), a, |x| c * x)
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: &[f64]) -> Var {
        let an = self.node(a);
        assert_eq!(an.len, mask.len());
        let off = self.aux.len();
        self.aux.extend_from_slice(mask);
        self.push(Op::Mask { x: a, off }, an.len, |inp, out, aux| {
            for ((o, x), m) in out.iter_mut().zip(Self::slice(inp, an)).zip(&aux[off..]) {
                *o = x * m;
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh(a), a, f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(Op::Elu(a), a, |x| if x > 0.0 { x } else { x.exp_m1() })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu(a), a, |x| x.max(0.0))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::LogSigmoid(a), a, log_sigmoid)
    }

    /// `cos(freq * dt + phase)`.
    pub fn time_encode(&mut self, store: &ParameterStore, freq: ParamId, phase: ParamId, dt: f64) -> Var {
        let (f, p) = (store.value(freq), store.value(phase));
        assert_eq!(f.len(), p.len());
        self.push(Op::TimeEncode { freq, phase, dt }, f.len(), |_, out, _| {
            for ((o, w), b) in out.iter_mut().zip(f).zip(p) {
                *o = (w * dt + b).cos();
            }
        })
    }

    fn record_children(&mut self, parts: &[Var]) -> usize {
        let start = self.children.len();
        self.children.extend_from_slice(parts);
        start
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let start = self.record_children(parts);
        let nodes: Vec<Node> = parts.iter().map(|&p| self.node(p)).collect();
        let len = nodes.iter().map(|n| n.len).sum();
        self.push(Op::Concat { start, count: parts.len() }, len, |inp, out, _| {
            let mut at = 0;
            for n in &nodes {
                out[at..at + n.len].copy_from_slice(Self::slice(inp, *n));
                at += n.len;
            }
        })
    }

    /// Elementwise sum of equally sized nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let start = self.record_children(parts);
        let nodes: Vec<Node> = parts.iter().map(|&p| self.node(p)).collect();
        let len = nodes[0].len;
        assert!(nodes.iter().all(|n| n.len == len));
        self.push(Op::Sum { start, count: parts.len() }, len, |inp, out, _| {
            for n in &nodes {
                for (o, x) in out.iter_mut().zip(Self::slice(inp, *n)) {
                    *o += x;
                }
            }
        })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (an, bn) = (self.node(a), self.node(b));
        assert_eq!(an.len, bn.len);
        self.push(Op::Dot(a, b), 1, |inp, out, _| {
            out[0] = dot(Self::slice(inp, an), Self::slice(inp, bn));
        })
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let an = self.node(a);
        self.push(Op::Softmax(a), an.len, |inp, out, _| {
            let xs = Self::slice(inp, an);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, x) in out.iter_mut().zip(xs) {
                *o = (x - max).exp();
                z += *o;
            }
            out.iter_mut().for_each(|o| *o /= z);
        })
    }

    /// `sum_i weights[i] * items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let wn = self.node(weights);
        assert_eq!(wn.len, items.len());
        assert!(!items.is_empty());
        let start = self.record_children(items);
        let nodes: Vec<Node> = items.iter().map(|&p| self.node(p)).collect();
        let len = nodes[0].len;
        self.push(Op::WeightedSum { weights, start, count: items.len() }, len, |inp, out, _| {
            let ws = Self::slice(inp, wn);
            for (n, w) in nodes.iter().zip(ws) {
                axpy(*w, Self::slice(inp, *n), out);
            }
        })
    }

    /// Symmetric two-view InfoNCE with cosine similarity.
    ///
    /// `first[i]` and `second[i]` form the positive pair; every other row of
    /// either view is a negative. The loss is averaged over all `2n` anchors.
    pub fn info_nce(&mut self, first: &[Var], second: &[Var], tau: f64) -> Var {
        assert_eq!(first.len(), second.len());
        assert!(first.len() >= 2, "contrastive loss needs at least two pairs");
        let mut rows = first.to_vec();
        rows.extend_from_slice(second);
        let start = self.record_children(&rows);
        let nodes: Vec<Node> = rows.iter().map(|&p| self.node(p)).collect();
        self.push(Op::InfoNce { start, count: rows.len(), tau }, 1, |inp, out, _| {
            let slices: Vec<&[f64]> = nodes.iter().map(|n| Self::slice(inp, *n)).collect();
            out[0] = info_nce_parts(&slices, tau).loss;
        })
    }

    /// Accumulates d(root)/d(param) into `store` for every parameter on the tape.
    pub fn backward(&self, root: Var, store: &mut ParameterStore) {
        let rn = self.node(root);
        assert_eq!(rn.len, 1, "backward needs a scalar root");
        let mut grads = vec![0.0f64; rn.off + 1];
        grads[rn.off] = 1.0;
        let values = &self.values;
        let val = |n: Node| &values[n.off..n.off + n.len];

        for idx in (0..=root.0 as usize).rev() {
            let node = self.nodes[idx];
            let (lo, hi) = grads.split_at_mut(node.off);
            let g = &hi[..node.len];
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            match node.op {
                Op::Input => {}
                Op::Param(id) => {
                    axpy(1.0, g, &mut store.tensor_mut(id).grad);
                }
                Op::Affine { w, b, x } => {
                    let xn = self.node(x);
                    let xs = val(xn);
                    let t = store.tensor_mut(w);
                    let cols = t.cols;
                    let r = self.range(x);
                    {
                        let gx = &mut lo[r];
                        for (row, &gy) in g.iter().enumerate() {
                            if gy != 0.0 {
                                axpy(gy, &t.value[row * cols..(row + 1) * cols], gx);
                            }
                        }
                    }
                    for (row, &gy) in g.iter().enumerate() {
                        if gy != 0.0 {
                            axpy(gy, xs, &mut t.grad[row * cols..(row + 1) * cols]);
                        }
                    }
                    if let Some(b) = b {
                        axpy(1.0, g, &mut store.tensor_mut(b).grad);
                    }
                }
                Op::Add(a, b) => {
                    let ra = self.range(a);
                    axpy(1.0, g, &mut lo[ra]);
                    let rb = self.range(b);
                    axpy(1.0, g, &mut lo[rb]);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(self.node(a)), val(self.node(b)));
                    let ra = self.range(a);
                    for ((o, gi), y) in lo[ra].iter_mut().zip(g).zip(bv) {
                        *o += gi * y;
                    }
                    let rb = self.range(b);
                    for ((o, gi), x) in lo[rb].iter_mut().zip(g).zip(av) {
                        *o += gi * x;
                    }
                }
                Op::OneMinus(a) => {
                    let ra = self.range(a);
                    axpy(-1.0, g, &mut lo[ra]);
                }
                Op::Scale(a, c) => {
                    let ra = self.range(a);
                    axpy(c, g, &mut lo[ra]);
                }
                Op::Mask { x, off } => {
                    let m = &self.aux[off..off + node.len];
                    let ra = self.range(x);
                    for ((o, gi), mi) in lo[ra].iter_mut().zip(g).zip(m) {
                        *o += gi * mi;
                    }
                }
                Op::Tanh(a) => {
                    let y = val(node);
                    let ra = self.range(a);
                    for ((o, gi), yi) in lo[ra].iter_mut().zip(g).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = val(node);
                    let ra = self.range(a);
                    for ((o, gi), yi) in lo[ra].iter_mut().zip(g).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
                Op::Elu(a) => {
                    let (x, y) = (val(self.node(a)), val(node));
                    let ra = self.range(a);
                    for (((o, gi), xi), yi) in lo[ra].iter_mut().zip(g).zip(x).zip(y) {
                        *o += if *xi > 0.0 { *gi } else { gi * (yi + 1.0) };
                    }
                }
                Op::Relu(a) => {
                    let x = val(self.node(a));
                    let ra = self.range(a);
                    for ((o, gi), xi) in lo[ra].iter_mut().zip(g).zip(x) {
                        if *xi > 0.0 {
                            *o += gi;
                        }
                    }
                }
                Op::LogSigmoid(a) => {
                    let x = val(self.node(a));
                    let ra = self.range(a);
                    for ((o, gi), xi) in lo[ra].iter_mut().zip(g).zip(x) {
                        *o += gi * sigmoid(-xi);
                    }
                }
                Op::TimeEncode { freq, phase, dt } => {
                    let mut dphase = vec![0.0; node.len];
                    {
                        let (f, p) = (store.value(freq), store.value(phase));
                        for k in 0..node.len {
                            dphase[k] = -g[k] * (f[k] * dt + p[k]).sin();
                        }
                    }
                    axpy(dt, &dphase, &mut store.tensor_mut(freq).grad);
                    axpy(1.0, &dphase, &mut store.tensor_mut(phase).grad);
                }
                Op::Concat { start, count } => {
                    let mut at = 0;
                    for &c in &self.children[start..start + count] {
                        let r = self.range(c);
                        let len = r.len();
                        axpy(1.0, &g[at..at + len], &mut lo[r]);
                        at += len;
                    }
                }
                Op::Sum { start, count } => {
                    for &c in &self.children[start..start + count] {
                        let r = self.range(c);
                        axpy(1.0, g, &mut lo[r]);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (val(self.node(a)), val(self.node(b)));
                    let ra = self.range(a);
                    axpy(g[0], bv, &mut lo[ra]);
                    let rb = self.range(b);
                    axpy(g[0], av, &mut lo[rb]);
                }
                Op::Softmax(a) => {
                    let y = val(node);
                    let gy = dot(g, y);
                    let ra = self.range(a);
                    for ((o, gi), yi) in lo[ra].iter_mut().zip(g).zip(y) {
                        *o += yi * (gi - gy);
                    }
                }
                Op::WeightedSum { weights, start, count } => {
                    let wn = self.node(weights);
                    let ws = val(wn).to_vec();
                    for (i, &c) in self.children[start..start + count].iter().enumerate() {
                        let cv = val(self.node(c));
                        let gw = dot(g, cv);
                        lo[wn.off + i] += gw;
                        let r = self.range(c);
                        axpy(ws[i], g, &mut lo[r]);
                    }
                }
                Op::InfoNce { start, count, tau } => {
                    let rows = &self.children[start..start + count];
                    let slices: Vec<&[f64]> = rows.iter().map(|&c| val(self.node(c))).collect();
                    let parts = info_nce_parts(&slices, tau);
                    let m = count;
                    let n = m / 2;
                    let scale = g[0] / (m as f64 * tau);
                    for a in 0..m {
                        // d loss / d normed[a]
                        let dim = parts.normed[a].len();
                        let mut dn = vec![0.0; dim];
                        for b in 0..m {
                            if b == a {
                                continue;
                            }
                            let target = |x: usize, y: usize| if y == (x + n) % m { 1.0 } else { 0.0 };
                            let coef = (parts.soft[a * m + b] - target(a, b)) + (parts.soft[b * m + a] - target(b, a));
                            axpy(coef * scale, &parts.normed[b], &mut dn);
                        }
                        let norm = parts.norms[a];
                        if norm < NORM_FLOOR {
                            continue;
                        }
                        let proj = dot(&dn, &parts.normed[a]);
                        let r = self.range(rows[a]);
                        for ((o, d), u) in lo[r].iter_mut().zip(&dn).zip(&parts.normed[a]) {
                            *o += (d - proj * u) / norm;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(rng: &mut ChaCha8Rng) -> (ParameterStore, ParamId, ParamId, ParamId, ParamId) {
        let mut s = ParameterStore::new();
        let mut r = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let w = s.add("w", 3, 4, r(12));
        let b = s.add("b", 3, 1, r(3));
        let f = s.add("freq", 4, 1, r(4));
        let p = s.add("phase", 4, 1, r(4));
        (s, w, b, f, p)
    }

    /// Exercises every op in one scalar graph.
    fn graph(tape: &mut Tape, s: &ParameterStore, ids: (ParamId, ParamId, ParamId, ParamId), x: &[f64]) -> Var {
        let (w, b, f, p) = ids;
        let xi = tape.input(x);
        let te = tape.time_encode(s, f, p, 0.37);
        let h = tape.add(xi, te);
        let h = tape.mask(h, &[1.0, 0.0, 2.0, 1.5]);
        let y = tape.affine(s, w, Some(b), h);
        let a = tape.tanh(y);
        let z = tape.sigmoid(y);
        let e = tape.elu(y);
        let r = tape.relu(y);
        let om = tape.one_minus(z);
        let m = tape.mul(a, om);
        let sc = tape.scale(e, -0.7);
        let cat = tape.concat(&[m, sc]);
        let sm = tape.softmax(cat);
        let cat2 = tape.concat(&[r, a]);
        let ws = tape.weighted_sum(sm, &[m, sc, r, a, z, e]);
        let d = tape.dot(ws, y);
        let ls = tape.log_sigmoid(d);
        let u: Vec<Var> = (0..3).map(|i| tape.scale(cat2, 1.0 + i as f64)).collect();
        let v: Vec<Var> = (0..3).map(|i| tape.scale(cat, 0.5 - i as f64)).collect();
        let nce = tape.info_nce(&u, &v, 0.5);
        let bias = tape.param(s, b);
        let bd = tape.dot(bias, y);
        tape.sum(&[ls, nce, bd])
    }

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut s, w, b, f, p) = random_store(&mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut tape = Tape::new();
            let root = graph(&mut tape, &s, (w, b, f, p), &x);
            s.zero_grad();
            tape.backward(root, &mut s);
            let analytic = s.clone();
            for id in [w, b, f, p] {
                for k in 0..s.tensor(id).len() {
                    let h = 1e-6;
                    let orig = s.tensor(id).value[k];
                    s.tensor_mut(id).value[k] = orig + h;
                    let mut t = Tape::new();
                    let r = graph(&mut t, &s, (w, b, f, p), &x);
                    let plus = t.scalar(r);
                    s.tensor_mut(id).value[k] = orig - h;
                    let mut t = Tape::new();
                    let r = graph(&mut t, &s, (w, b, f, p), &x);
                    let minus = t.scalar(r);
                    s.tensor_mut(id).value[k] = orig;
                    let fd = (plus - minus) / (2.0 * h);
                    let an = analytic.grad(id)[k];
                    assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "{} [{k}]: fd {fd} vs {an}", s.tensor(id).name);
                }
            }
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert_eq!(log_sigmoid(1000.0), 0.0);
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, ..) = random_store(&mut rng);
        let mut buf = Vec::new();
        s.write_checkpoint(42, &mut buf).unwrap();
        let (back, hash) = ParameterStore::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(hash, 42);
        assert_eq!(back.digest(), s.digest());
        assert!(ParameterStore::read_checkpoint(&buf[..10]).is_err());
    }
}
