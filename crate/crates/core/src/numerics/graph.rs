//! Reverse-mode computation record.
//!
//! A [`Graph`] stores every primitive applied during a forward pass, in order.
//! Node values are held in `f64` so that finite-difference checks at small
//! step sizes stay meaningful; parameters themselves live in `f32` [`Tensor`]s.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Var),
    AddScalar(Var, Var),
    Elu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Dot(Var, Var),
    Cosine(Var, Var),
    Sum(Var),
    SumSquares(Var),
    LogSigmoid(Var),
    Neg(Var),
    Pick(Var, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { trainable: true } => "param",
            Op::Leaf { trainable: false } => "const",
            Op::MatVec(..) => "matvec",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Elu(..) => "elu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Softmax(..) => "softmax",
            Op::Concat(..) => "concat",
            Op::Dot(..) => "dot",
            Op::Cosine(..) => "cosine",
            Op::Sum(..) => "sum",
            Op::SumSquares(..) => "sum_squares",
            Op::LogSigmoid(..) => "log_sigmoid",
            Op::Neg(..) => "neg",
            Op::Pick(..) => "pick",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// ELU with alpha = 1.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("softmax"));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf initialised from a parameter tensor.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.to_f64(), Op::Leaf { trainable: true })
    }

    /// Non-trainable leaf (fixed input or detached state).
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.to_f64(), Op::Leaf { trainable: false })
    }

    pub fn leaf(&mut self, shape: Vec<usize>, value: Vec<f64>, trainable: bool) -> Result<Var> {
        if shape.is_empty() || shape.iter().product::<usize>() != value.len() || value.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                left: shape,
                right: vec![value.len()],
            });
        }
        Ok(self.push(shape, value, Op::Leaf { trainable }))
    }

    pub fn vector(&mut self, value: Vec<f64>) -> Result<Var> {
        let n = value.len();
        self.leaf(vec![n], value, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf { trainable: true })
    }

    /// Operation names in forward order.
    pub fn trace(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    fn vec_len(&self, v: Var, op: &'static str) -> Result<usize> {
        let shape = self.shape(v);
        if shape.len() != 1 {
            return Err(Error::ShapeMismatch {
                op,
                left: shape.to_vec(),
                right: vec![],
            });
        }
        Ok(shape[0])
    }

    fn same_vec(&self, a: Var, b: Var, op: &'static str) -> Result<usize> {
        let na = self.vec_len(a, op)?;
        let nb = self.vec_len(b, op)?;
        if na != nb {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(na)
    }

    fn check_scalar(&self, s: Var, op: &'static str) -> Result<()> {
        if self.shape(s) != [1] {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(s).to_vec(),
                right: vec![1],
            });
        }
        Ok(())
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                left: ws,
                right: xs,
            });
        }
        let (rows, cols) = (ws[0], ws[1]);
        let wv = self.value(w);
        let xv = self.value(x);
        let out: Vec<f64> = (0..rows)
            .map(|i| {
                wv[i * cols..(i + 1) * cols]
                    .iter()
                    .zip(xv)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(self.push(vec![rows], out, Op::MatVec(w, x)))
    }

    fn zip_map(&mut self, a: Var, b: Var, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let n = self.same_vec(a, b, name)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(vec![n], out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Vector times a scalar node.
    pub fn scale(&mut self, a: Var, s: Var) -> Result<Var> {
        let n = self.vec_len(a, "scale")?;
        self.check_scalar(s, "scale")?;
        let k = self.scalar(s);
        let out = self.value(a).iter().map(|x| x * k).collect();
        Ok(self.push(vec![n], out, Op::Scale(a, s)))
    }

    /// Vector plus a broadcast scalar node.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let n = self.vec_len(a, "add_scalar")?;
        self.check_scalar(s, "add_scalar")?;
        let k = self.scalar(s);
        let out = self.value(a).iter().map(|x| x + k).collect();
        Ok(self.push(vec![n], out, Op::AddScalar(a, s)))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let shape = self.shape(a).to_vec();
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(shape, out, op)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Elu(a), elu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::LogSigmoid(a), log_sigmoid)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.vec_len(a, "softmax")?;
        let out = softmax(self.value(a))?;
        Ok(self.push(vec![n], out, Op::Softmax(a)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat"));
        }
        let mut out = Vec::new();
        for &p in parts {
            self.vec_len(p, "concat")?;
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        Ok(self.push(vec![n], out, Op::Concat(parts.to_vec())))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_vec(a, b, "dot")?;
        let d = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(vec![1], vec![d], Op::Dot(a, b)))
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_vec(a, b, "cosine")?;
        let (av, bv) = (self.value(a), self.value(b));
        let na = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = bv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 {
            return Err(Error::ZeroNorm("left operand"));
        }
        if nb == 0.0 {
            return Err(Error::ZeroNorm("right operand"));
        }
        let d: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        let c = (d / (na * nb)).clamp(-1.0, 1.0);
        Ok(self.push(vec![1], vec![c], Op::Cosine(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|x| x * x).sum();
        self.push(vec![1], vec![s], Op::SumSquares(a))
    }

    /// Extracts element `i` of a vector as a scalar node.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.vec_len(a, "pick")?;
        if i >= n {
            return Err(Error::ShapeMismatch {
                op: "pick",
                left: vec![n],
                right: vec![i],
            });
        }
        let x = self.value(a)[i];
        Ok(self.push(vec![1], vec![x], Op::Pick(a, i)))
    }

    /// Σ_j weights[j] · items[j].
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let n = self.vec_len(weights, "weighted_sum")?;
        if n != items.len() || n == 0 {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                left: vec![n],
                right: vec![items.len()],
            });
        }
        let mut acc: Option<Var> = None;
        for (j, &item) in items.iter().enumerate() {
            let w = self.pick(weights, j)?;
            let term = self.scale(item, w)?;
            acc = Some(match acc {
                None => term,
                Some(prev) => self.add(prev, term)?,
            });
        }
        Ok(acc.expect("nonempty"))
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Gradient of `loss` with respect to `v`; zeros if `v` did not contribute.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        match self.grads.get(v.0) {
            Some(g) if !g.is_empty() => g.clone(),
            _ => vec![0.0; self.nodes[v.0].value.len()],
        }
    }

    /// Propagates d`loss`/d(node) for every node recorded before `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        self.check_scalar(loss, "backward")?;
        self.backward_done = true;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            let acc = |grads: &mut Vec<Vec<f64>>, v: Var, idx: usize, delta: f64| {
                let slot = &mut grads[v.0];
                if slot.is_empty() {
                    *slot = vec![0.0; self.nodes[v.0].value.len()];
                }
                slot[idx] += delta;
            };
            match &node.op {
                Op::Leaf { .. } => {}
                Op::MatVec(w, x) => {
                    let cols = self.nodes[w.0].shape[1];
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            acc(&mut grads, *w, r * cols + c, gr * xv[c]);
                            acc(&mut grads, *x, c, gr * wv[r * cols + c]);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, gj);
                        acc(&mut grads, *b, j, gj);
                    }
                }
                Op::Sub(a, b) => {
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, gj);
                        acc(&mut grads, *b, j, -gj);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, gj * bv[j]);
                        acc(&mut grads, *b, j, gj * av[j]);
                    }
                }
                Op::Scale(a, s) => {
                    let av = &self.nodes[a.0].value;
                    let k = self.nodes[s.0].value[0];
                    let mut ds = 0.0;
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, gj * k);
                        ds += gj * av[j];
                    }
                    acc(&mut grads, *s, 0, ds);
                }
                Op::AddScalar(a, s) => {
                    let mut ds = 0.0;
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, gj);
                        ds += gj;
                    }
                    acc(&mut grads, *s, 0, ds);
                }
                Op::Elu(a) => {
                    let xv = &self.nodes[a.0].value;
                    for (j, &gj) in g.iter().enumerate() {
                        let d = if xv[j] > 0.0 { 1.0 } else { xv[j].exp() };
                        acc(&mut grads, *a, j, gj * d);
                    }
                }
                Op::Sigmoid(a) => {
                    for (j, &gj) in g.iter().enumerate() {
                        let y = node.value[j];
                        acc(&mut grads, *a, j, gj * y * (1.0 - y));
                    }
                }
                Op::Tanh(a) => {
                    for (j, &gj) in g.iter().enumerate() {
                        let y = node.value[j];
                        acc(&mut grads, *a, j, gj * (1.0 - y * y));
                    }
                }
                Op::Neg(a) => {
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, -gj);
                    }
                }
                Op::LogSigmoid(a) => {
                    let xv = &self.nodes[a.0].value;
                    for (j, &gj) in g.iter().enumerate() {
                        acc(&mut grads, *a, j, gj * sigmoid(-xv[j]));
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for j in 0..y.len() {
                        acc(&mut grads, *a, j, y[j] * (g[j] - gy));
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        for j in 0..n {
                            acc(&mut grads, *p, j, g[offset + j]);
                        }
                        offset += n;
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for j in 0..av.len() {
                        acc(&mut grads, *a, j, g[0] * bv[j]);
                        acc(&mut grads, *b, j, g[0] * av[j]);
                    }
                }
                Op::Cosine(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let na2: f64 = av.iter().map(|x| x * x).sum();
                    let nb2: f64 = bv.iter().map(|x| x * x).sum();
                    let (na, nb) = (na2.sqrt(), nb2.sqrt());
                    let d: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
                    let c = d / (na * nb);
                    for j in 0..av.len() {
                        let da = bv[j] / (na * nb) - c * av[j] / na2;
                        let db = av[j] / (na * nb) - c * bv[j] / nb2;
                        acc(&mut grads, *a, j, g[0] * da);
                        acc(&mut grads, *b, j, g[0] * db);
                    }
                }
                Op::Sum(a) => {
                    for j in 0..self.nodes[a.0].value.len() {
                        acc(&mut grads, *a, j, g[0]);
                    }
                }
                Op::SumSquares(a) => {
                    let av = &self.nodes[a.0].value;
                    for (j, x) in av.iter().enumerate() {
                        acc(&mut grads, *a, j, 2.0 * g[0] * x);
                    }
                }
                Op::Pick(a, idx) => acc(&mut grads, *a, *idx, g[0]),
            }
            grads[i] = g;
        }
        self.grads = grads;
        Ok(())
    }
}
