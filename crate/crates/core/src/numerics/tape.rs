//! Tape-based reverse-mode differentiation over row-major matrices.
//!
//! A [`Tape`] lives for one forward/backward pass. Nodes are appended in
//! evaluation order, so walking them backwards is a valid topological order.
//! Dropping the tape frees the graph.

use super::params::{ParamId, ParamSet};
use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    /// `x * w + b` with `w` stored as `in x out`.
    Linear { x: Var, w: Var, b: Var },
    /// `a * b^T`
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Square(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    /// Output row `r` is input row `r / times`.
    RepeatRows { x: Var, times: usize },
    SumCols(Var),
    Mean(Var),
    /// Mean softmax cross-entropy of each row against its target column.
    SoftmaxXent { logits: Var, targets: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a parameter once per tape; repeated calls return the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let idx = id.index();
        if idx >= self.param_vars.len() {
            self.param_vars.resize(idx + 1, None);
        }
        if let Some(v) = self.param_vars[idx] {
            return v;
        }
        let v = self.push(params.value(id).clone(), Op::Param);
        self.param_vars[idx] = Some(v);
        v
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (rows, k, n) = (xv.rows(), xv.cols(), wv.cols());
        assert_eq!(wv.rows(), k, "linear: input width {k} vs weight rows {}", wv.rows());
        assert_eq!(bv.len(), n, "linear: bias length");
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(bv.data());
        }
        matmul_acc(xv.data(), wv.data(), &mut out, rows, k, n);
        let value = Tensor::matrix(rows, n, out).expect("linear shape");
        self.push(value, Op::Linear { x, w, b })
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (rows, n, k) = (av.rows(), av.cols(), bv.rows());
        assert_eq!(bv.cols(), n, "matmul_nt: inner dimension");
        let mut out = vec![0.0; rows * k];
        matmul_nt_acc(av.data(), bv.data(), &mut out, rows, n, k);
        let value = Tensor::matrix(rows, k, out).expect("matmul shape");
        self.push(value, Op::MatMulNt(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(av, bv, what);
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("zip shape");
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddConst(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Elementwise clamp; gradient passes only where the input is inside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    /// Column-wise concatenation of inputs with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), rows, "concat: row mismatch");
                self.value(p).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::matrix(rows, total, out).expect("concat shape");
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        assert!(start + len <= cols, "slice out of range");
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        let value = Tensor::matrix(rows, len, out).expect("slice shape");
        self.push(value, Op::Slice { x, start })
    }

    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut out = Vec::with_capacity(rows * times * cols);
        for r in 0..rows {
            for _ in 0..times {
                out.extend_from_slice(xv.row_slice(r));
            }
        }
        let value = Tensor::matrix(rows * times, cols, out).expect("repeat shape");
        self.push(value, Op::RepeatRows { x, times })
    }

    /// Per-row sum, giving a `rows x 1` column.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let rows = xv.rows();
        let out = (0..rows).map(|r| xv.row_slice(r).iter().sum()).collect();
        let value = Tensor::matrix(rows, 1, out).expect("sum shape");
        self.push(value, Op::SumCols(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let m = xv.sum() / xv.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x))
    }

    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lv = self.value(logits);
        let rows = lv.rows();
        assert_eq!(targets.len(), rows, "softmax_xent: one target per row");
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row_slice(r);
            total += log_sum_exp(row) - row[t];
        }
        let value = Tensor::scalar(total / rows as f64);
        self.push(value, Op::SoftmaxXent { logits, targets: targets.to_vec() })
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(self.value(root).shape(), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        let like = |v: Var, data: Vec<f64>| {
            Tensor::new(self.value(v).shape().to_vec(), data).expect("grad shape")
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (rows, k, n) = (xv.rows(), xv.cols(), wv.cols());
                let mut dx = vec![0.0; rows * k];
                matmul_nt_acc(gd, wv.data(), &mut dx, rows, n, k);
                acc(grads, *x, like(*x, dx));
                let mut dw = vec![0.0; k * n];
                matmul_tn_acc(xv.data(), gd, &mut dw, rows, k, n);
                acc(grads, *w, like(*w, dw));
                let mut db = vec![0.0; n];
                for r in 0..rows {
                    for (d, &gv) in db.iter_mut().zip(&gd[r * n..(r + 1) * n]) {
                        *d += gv;
                    }
                }
                acc(grads, *b, like(*b, db));
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (rows, n, k) = (av.rows(), av.cols(), bv.rows());
                let mut da = vec![0.0; rows * n];
                matmul_acc(gd, bv.data(), &mut da, rows, k, n);
                acc(grads, *a, like(*a, da));
                let mut db = vec![0.0; k * n];
                matmul_tn_acc(gd, av.data(), &mut db, rows, k, n);
                acc(grads, *b, like(*b, db));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let da = gd.iter().zip(bv).map(|(g, y)| g * y).collect();
                let db = gd.iter().zip(av).map(|(g, x)| g * x).collect();
                acc(grads, *a, like(*a, da));
                acc(grads, *b, like(*b, db));
            }
            Op::Scale(a, c) => acc(grads, *a, g.map(|v| v * c)),
            Op::AddConst(a) => acc(grads, *a, g.clone()),
            Op::Tanh(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let d = gd.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Exp(a) => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, y)| g * y).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                let d = gd.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect();
                acc(grads, *a, like(*a, d));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(xv)
                    .map(|(g, &v)| if v >= *lo && v <= *hi { *g } else { 0.0 })
                    .collect();
                acc(grads, *x, like(*x, d));
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    acc(grads, p, like(p, d));
                    offset += w;
                }
            }
            Op::Slice { x, start } => {
                let xv = self.value(*x);
                let (rows, cols) = (xv.rows(), xv.cols());
                let len = node.value.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&gd[r * len..(r + 1) * len]);
                }
                acc(grads, *x, like(*x, d));
            }
            Op::RepeatRows { x, times } => {
                let xv = self.value(*x);
                let (rows, cols) = (xv.rows(), xv.cols());
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let dst = &mut d[r * cols..(r + 1) * cols];
                    for t in 0..*times {
                        let src = r * times + t;
                        for (o, &gv) in dst.iter_mut().zip(&gd[src * cols..(src + 1) * cols]) {
                            *o += gv;
                        }
                    }
                }
                acc(grads, *x, like(*x, d));
            }
            Op::SumCols(x) => {
                let xv = self.value(*x);
                let (rows, cols) = (xv.rows(), xv.cols());
                let mut d = Vec::with_capacity(rows * cols);
                for &gv in gd.iter().take(rows) {
                    d.extend(std::iter::repeat_n(gv, cols));
                }
                acc(grads, *x, like(*x, d));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                let gv = gd[0] / n;
                acc(grads, *x, self.value(*x).map(|_| gv));
            }
            Op::SoftmaxXent { logits, targets } => {
                let lv = self.value(*logits);
                let (rows, cols) = (lv.rows(), lv.cols());
                let scale = gd[0] / rows as f64;
                let mut d = Vec::with_capacity(rows * cols);
                for (r, &t) in targets.iter().enumerate() {
                    let row = lv.row_slice(r);
                    let lse = log_sum_exp(row);
                    for (c, &l) in row.iter().enumerate() {
                        let p = (l - lse).exp();
                        let onehot = if c == t { 1.0 } else { 0.0 };
                        d.push(scale * (p - onehot));
                    }
                }
                acc(grads, *logits, like(*logits, d));
            }
        }
    }

    /// Adds the gradient of every parameter node into `params`.
    pub fn accumulate_param_grads(&self, grads: &Grads, params: &mut ParamSet) {
        for (idx, slot) in self.param_vars.iter().enumerate() {
            let Some(v) = slot else { continue };
            if let Some(g) = grads.get(*v) {
                params.grad_mut(ParamId::from_index(idx)).add_assign(g);
            }
        }
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

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}
