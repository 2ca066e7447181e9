//! Tape-based reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Calling
//! [`Graph::backward`] on a `1 x 1` output propagates adjoints through the
//! recorded nodes in reverse creation order.
//!
//! Elementwise binary operations broadcast along any axis of extent 1, so a
//! `[n, 1]` column can scale an `[n, d]` matrix and a `[1, d]` row can act as a
//! bias. Nothing more general is supported.
//!
//! ```
//! use dmvi_core::autodiff::Graph;
//! use dmvi_core::Tensor;
//!
//! let g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::scalar(3.0));
//! let y = x * x;
//! let grads = g.backward(y);
//! assert_eq!(y.item(), 9.0);
//! assert_eq!(grads.wrt(x).item(), 6.0);
//! ```

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, S),
    AddScalar(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Gelu(usize),
    Softplus(usize),
    Square(usize),
    Clamp(usize, S, S),
    MatMul(usize, usize),
    Sum(usize),
    SumCols(usize),
    SumRows(usize),
    LayerNorm(usize, S),
    LogSumExp(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: RefCell<Vec<Node<S>>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'g, S> {
    graph: &'g Graph<S>,
    id: usize,
}

/// Adjoints of every node, indexed by node.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    shapes: Vec<[usize; 2]>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: Var<'_, S>) -> Option<&Tensor<S>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`; zeros when the output does not depend on it.
    pub fn wrt(&self, var: Var<'_, S>) -> Tensor<S> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[var.id];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: S) -> Var<'_, S> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, a: usize, op: Op<S>, f: impl Fn(S) -> S) -> Var<'_, S> {
        let value = self.nodes.borrow()[a].value.map(f);
        let rg = self.needs(&[a]);
        self.push(value, op, rg)
    }

    fn binary(&self, a: usize, b: usize, op: Op<S>, f: impl Fn(S, S) -> S) -> Var<'_, S> {
        let value = {
            let nodes = self.nodes.borrow();
            broadcast_zip(&nodes[a].value, &nodes[b].value, f)
        };
        let rg = self.needs(&[a, b]);
        self.push(value, op, rg)
    }

    /// Columnwise concatenation of tensors with equal row counts.
    pub fn concat_cols<'g>(&'g self, parts: &[Var<'g, S>]) -> Var<'g, S> {
        let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
        let value = {
            let nodes = self.nodes.borrow();
            let rows = nodes[ids[0]].value.rows();
            let cols: usize = ids.iter().map(|&i| nodes[i].value.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for &i in &ids {
                    let t = &nodes[i].value;
                    assert_eq!(t.rows(), rows, "concat_cols: row count mismatch");
                    data.extend_from_slice(t.row_slice(r));
                }
            }
            Tensor::new(rows, cols, data).expect("concat shape")
        };
        let rg = self.needs(&ids);
        self.push(value, Op::ConcatCols(ids), rg)
    }

    /// Elementwise `log Σ_k exp(x_k)` across equally shaped tensors.
    pub fn logsumexp<'g>(&'g self, parts: &[Var<'g, S>]) -> Var<'g, S> {
        let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
        let value = {
            let nodes = self.nodes.borrow();
            let first = &nodes[ids[0]].value;
            let mut out = first.clone();
            for (j, o) in out.data_mut().iter_mut().enumerate() {
                let m = ids
                    .iter()
                    .map(|&i| nodes[i].value.data()[j])
                    .fold(S::neg_infinity(), S::max);
                if m == S::neg_infinity() {
                    *o = m;
                    continue;
                }
                let s: S = ids.iter().map(|&i| (nodes[i].value.data()[j] - m).exp()).sum();
                *o = m + s.ln();
            }
            out
        };
        let rg = self.needs(&ids);
        self.push(value, Op::LogSumExp(ids), rg)
    }

    /// Reverse sweep from a `1 x 1` output.
    pub fn backward(&self, output: Var<'_, S>) -> Gradients<S> {
        let nodes = self.nodes.borrow();
        let shapes: Vec<[usize; 2]> = nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; nodes.len()];
        assert_eq!(
            nodes[output.id].value.len(),
            1,
            "backward() needs a scalar output"
        );
        if !nodes[output.id].requires_grad {
            return Gradients { grads, shapes };
        }
        grads[output.id] = Some(Tensor::scalar(S::one()));

        for id in (0..=output.id).rev() {
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let mut send = |target: usize, g: Tensor<S>| {
                if !nodes[target].requires_grad {
                    return;
                }
                let g = reduce_to(g, nodes[target].value.shape());
                match &mut grads[target] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, &b)| *a = *a + b),
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    send(*a, upstream.clone());
                    send(*b, upstream.clone());
                }
                Op::Sub(a, b) => {
                    send(*a, upstream.clone());
                    send(*b, upstream.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    if nodes[*a].requires_grad {
                        send(*a, broadcast_zip(&upstream, val(*b), |u, y| u * y));
                    }
                    if nodes[*b].requires_grad {
                        send(*b, broadcast_zip(&upstream, val(*a), |u, x| u * x));
                    }
                }
                Op::Div(a, b) => {
                    if nodes[*a].requires_grad {
                        send(*a, broadcast_zip(&upstream, val(*b), |u, y| u / y));
                    }
                    if nodes[*b].requires_grad {
                        // d(x/y)/dy = -(x/y)/y
                        let q = broadcast_zip(&node.value, val(*b), |z, y| -z / y);
                        send(*b, broadcast_zip(&upstream, &q, |u, w| u * w));
                    }
                }
                Op::Neg(a) => send(*a, upstream.map(|v| -v)),
                Op::Scale(a, c) => {
                    let c = *c;
                    send(*a, upstream.map(|v| v * c));
                }
                Op::AddScalar(a) => send(*a, upstream.clone()),
                Op::Exp(a) => send(*a, zip(&upstream, &node.value, |u, y| u * y)),
                Op::Log(a) => send(*a, zip(&upstream, val(*a), |u, x| u / x)),
                Op::Tanh(a) => send(*a, zip(&upstream, &node.value, |u, y| u * (S::one() - y * y))),
                Op::Gelu(a) => send(*a, zip(&upstream, val(*a), |u, x| u * gelu_grad(x))),
                Op::Softplus(a) => send(*a, zip(&upstream, val(*a), |u, x| u * sigmoid(x))),
                Op::Square(a) => send(*a, zip(&upstream, val(*a), |u, x| u * (x + x))),
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    send(
                        *a,
                        zip(&upstream, val(*a), |u, x| {
                            if x < lo || x > hi {
                                S::zero()
                            } else {
                                u
                            }
                        }),
                    );
                }
                Op::MatMul(a, b) => {
                    if nodes[*a].requires_grad {
                        send(*a, matmul_nt(&upstream, val(*b)));
                    }
                    if nodes[*b].requires_grad {
                        send(*b, matmul_tn(val(*a), &upstream));
                    }
                }
                Op::Sum(a) => {
                    let [r, c] = val(*a).shape();
                    send(*a, Tensor::filled(r, c, upstream.item()));
                }
                Op::SumCols(a) => {
                    let [r, c] = val(*a).shape();
                    send(*a, Tensor::from_fn(r, c, |i, _| upstream.data()[i]));
                }
                Op::SumRows(a) => {
                    let [r, c] = val(*a).shape();
                    send(*a, Tensor::from_fn(r, c, |_, j| upstream.data()[j]));
                }
                Op::LayerNorm(a, eps) => {
                    send(*a, layer_norm_backward(val(*a), &node.value, &upstream, *eps));
                }
                Op::LogSumExp(ids) => {
                    for &i in ids {
                        if nodes[i].requires_grad {
                            // softmax weight of part i
                            let w = zip(val(i), &node.value, |x, l| {
                                if l == S::neg_infinity() {
                                    S::zero()
                                } else {
                                    (x - l).exp()
                                }
                            });
                            send(i, zip(&upstream, &w, |u, w| u * w));
                        }
                    }
                }
                Op::ConcatCols(ids) => {
                    let mut offset = 0;
                    for &i in ids {
                        let [r, c] = val(i).shape();
                        if nodes[i].requires_grad {
                            send(i, slice_cols(&upstream, offset, c, r));
                        }
                        offset += c;
                    }
                }
                Op::SliceCols(a, start) => {
                    let [r, c] = val(*a).shape();
                    let width = upstream.cols();
                    let mut g = Tensor::zeros(r, c);
                    for i in 0..r {
                        for j in 0..width {
                            g.set(i, start + j, upstream.get(i, j));
                        }
                    }
                    send(*a, g);
                }
            }
            // Intermediate adjoints are no longer needed; leaves keep theirs.
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(upstream);
            }
        }
        Gradients { grads, shapes }
    }
}

impl<'g, S: Scalar> Var<'g, S> {
    pub fn graph(&self) -> &'g Graph<S> {
        self.graph
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Tensor<S> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor<S>) -> R) -> R {
        f(&self.graph.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.with_value(Tensor::shape)
    }

    pub fn rows(&self) -> usize {
        self.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.shape()[1]
    }

    /// Value of a `1 x 1` node.
    pub fn item(&self) -> S {
        self.with_value(Tensor::item)
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn scale(self, c: S) -> Self {
        self.graph.unary(self.id, Op::Scale(self.id, c), |x| x * c)
    }

    pub fn add_scalar(self, c: S) -> Self {
        self.graph.unary(self.id, Op::AddScalar(self.id), |x| x + c)
    }

    pub fn exp(self) -> Self {
        self.graph.unary(self.id, Op::Exp(self.id), S::exp)
    }

    pub fn ln(self) -> Self {
        self.graph.unary(self.id, Op::Log(self.id), S::ln)
    }

    pub fn tanh(self) -> Self {
        self.graph.unary(self.id, Op::Tanh(self.id), S::tanh)
    }

    /// Tanh approximation of the Gaussian error linear unit.
    pub fn gelu(self) -> Self {
        self.graph.unary(self.id, Op::Gelu(self.id), gelu)
    }

    pub fn softplus(self) -> Self {
        self.graph.unary(self.id, Op::Softplus(self.id), softplus)
    }

    pub fn square(self) -> Self {
        self.graph.unary(self.id, Op::Square(self.id), |x| x * x)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(self, lo: S, hi: S) -> Self {
        self.graph
            .unary(self.id, Op::Clamp(self.id, lo, hi), |x| x.max(lo).min(hi))
    }

    /// Matrix product `[m, k] x [k, n]`.
    pub fn matmul(self, rhs: Self) -> Self {
        let g = self.graph;
        let value = {
            let nodes = g.nodes.borrow();
            matmul(&nodes[self.id].value, &nodes[rhs.id].value)
        };
        let rg = g.needs(&[self.id, rhs.id]);
        g.push(value, Op::MatMul(self.id, rhs.id), rg)
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum(self) -> Self {
        let value = self.with_value(|t| Tensor::scalar(t.sum()));
        let rg = self.requires_grad();
        self.graph.push(value, Op::Sum(self.id), rg)
    }

    pub fn mean(self) -> Self {
        let n = S::count(self.with_value(Tensor::len));
        self.sum().scale(S::one() / n)
    }

    /// Row sums, as `[rows, 1]`.
    pub fn sum_cols(self) -> Self {
        let value = self.with_value(|t| Tensor::column(t.iter_rows().map(|r| r.iter().copied().sum()).collect()));
        let rg = self.requires_grad();
        self.graph.push(value, Op::SumCols(self.id), rg)
    }

    /// Column sums, as `[1, cols]`.
    pub fn sum_rows(self) -> Self {
        let value = self.with_value(|t| {
            let mut out = vec![S::zero(); t.cols()];
            for r in t.iter_rows() {
                out.iter_mut().zip(r).for_each(|(o, &v)| *o = *o + v);
            }
            Tensor::row(out)
        });
        let rg = self.requires_grad();
        self.graph.push(value, Op::SumRows(self.id), rg)
    }

    /// Normalizes each row to zero mean and unit variance (biased estimator).
    pub fn layer_norm(self, eps: S) -> Self {
        let value = self.with_value(|t| layer_norm(t, eps));
        let rg = self.requires_grad();
        self.graph.push(value, Op::LayerNorm(self.id, eps), rg)
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(self, start: usize, width: usize) -> Self {
        let value = self.with_value(|t| {
            assert!(start + width <= t.cols(), "slice_cols out of range");
            slice_cols(t, start, width, t.rows())
        });
        let rg = self.requires_grad();
        self.graph.push(value, Op::SliceCols(self.id, start), rg)
    }
}

impl<'g, S: Scalar> Add for Var<'g, S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.graph.binary(self.id, rhs.id, Op::Add(self.id, rhs.id), |a, b| a + b)
    }
}

impl<'g, S: Scalar> Sub for Var<'g, S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.graph.binary(self.id, rhs.id, Op::Sub(self.id, rhs.id), |a, b| a - b)
    }
}

impl<'g, S: Scalar> Mul for Var<'g, S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.graph.binary(self.id, rhs.id, Op::Mul(self.id, rhs.id), |a, b| a * b)
    }
}

impl<'g, S: Scalar> Div for Var<'g, S> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self.graph.binary(self.id, rhs.id, Op::Div(self.id, rhs.id), |a, b| a / b)
    }
}

impl<'g, S: Scalar> Neg for Var<'g, S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.graph.unary(self.id, Op::Neg(self.id), |x| -x)
    }
}

impl<'g, S: Scalar> Mul<S> for Var<'g, S> {
    type Output = Self;
    fn mul(self, rhs: S) -> Self {
        self.scale(rhs)
    }
}

impl<'g, S: Scalar> Add<S> for Var<'g, S> {
    type Output = Self;
    fn add(self, rhs: S) -> Self {
        self.add_scalar(rhs)
    }
}

impl<'g, S: Scalar> Sub<S> for Var<'g, S> {
    type Output = Self;
    fn sub(self, rhs: S) -> Self {
        self.add_scalar(-rhs)
    }
}

pub fn gelu<S: Scalar>(x: S) -> S {
    let c = S::lit(GELU_C);
    let a = S::lit(GELU_A);
    let half = S::lit(0.5);
    half * x * (S::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::lit(GELU_C);
    let a = S::lit(GELU_A);
    let half = S::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + S::lit(3.0) * a * x * x)
}

pub fn softplus<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn zip<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("zip shape")
}

fn broadcast_dim(a: usize, b: usize) -> usize {
    match (a, b) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        (x, y) => panic!("cannot broadcast extents {x} and {y}"),
    }
}

fn broadcast_zip<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    if a.shape() == b.shape() {
        return zip(a, b, f);
    }
    let rows = broadcast_dim(a.rows(), b.rows());
    let cols = broadcast_dim(a.cols(), b.cols());
    let (ar, ac) = (a.rows() != 1, a.cols() != 1);
    let (br, bc) = (b.rows() != 1, b.cols() != 1);
    Tensor::from_fn(rows, cols, |i, j| {
        let x = a.get(if ar { i } else { 0 }, if ac { j } else { 0 });
        let y = b.get(if br { i } else { 0 }, if bc { j } else { 0 });
        f(x, y)
    })
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to<S: Scalar>(g: Tensor<S>, shape: [usize; 2]) -> Tensor<S> {
    if g.shape() == shape {
        return g;
    }
    let [r, c] = shape;
    let mut out = Tensor::zeros(r, c);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let (oi, oj) = (if r == 1 { 0 } else { i }, if c == 1 { 0 } else { j });
            let v = out.get(oi, oj) + g.get(i, j);
            out.set(oi, oj, v);
        }
    }
    out
}

fn slice_cols<S: Scalar>(t: &Tensor<S>, start: usize, width: usize, rows: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        data.extend_from_slice(&t.row_slice(r)[start..start + width]);
    }
    Tensor::new(rows, width, data).expect("slice shape")
}

pub(crate) fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    assert_eq!(k, b.rows(), "matmul: inner extents {k} and {} differ", b.rows());
    let mut out = vec![S::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = ad[i * k + p];
            if x == S::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o = *o + x * y;
            }
        }
    }
    Tensor::new(m, n, out).expect("matmul shape")
}

/// `a * b^T`
fn matmul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (m, k) = (a.rows(), b.rows());
    let mut out = vec![S::zero(); m * k];
    for i in 0..m {
        let arow = a.row_slice(i);
        for j in 0..k {
            let brow = b.row_slice(j);
            out[i * k + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    Tensor::new(m, k, out).expect("matmul_nt shape")
}

/// `a^T * b`
fn matmul_tn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![S::zero(); k * n];
    for i in 0..m {
        let arow = a.row_slice(i);
        let brow = b.row_slice(i);
        for (p, &x) in arow.iter().enumerate() {
            if x == S::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o = *o + x * y;
            }
        }
    }
    Tensor::new(k, n, out).expect("matmul_tn shape")
}

fn row_moments<S: Scalar>(row: &[S]) -> (S, S) {
    let n = S::count(row.len());
    let mean = row.iter().copied().sum::<S>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    (mean, var)
}

fn layer_norm<S: Scalar>(t: &Tensor<S>, eps: S) -> Tensor<S> {
    let mut out = Vec::with_capacity(t.len());
    for row in t.iter_rows() {
        let (mean, var) = row_moments(row);
        let inv = S::one() / (var + eps).sqrt();
        out.extend(row.iter().map(|&x| (x - mean) * inv));
    }
    Tensor::new(t.rows(), t.cols(), out).expect("layer_norm shape")
}

fn layer_norm_backward<S: Scalar>(x: &Tensor<S>, y: &Tensor<S>, up: &Tensor<S>, eps: S) -> Tensor<S> {
    let n = S::count(x.cols());
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        let (_, var) = row_moments(x.row_slice(r));
        let inv = S::one() / (var + eps).sqrt();
        let (yr, ur) = (y.row_slice(r), up.row_slice(r));
        let mean_u = ur.iter().copied().sum::<S>() / n;
        let mean_uy = ur.iter().zip(yr).map(|(&u, &v)| u * v).sum::<S>() / n;
        out.extend(
            ur.iter()
                .zip(yr)
                .map(|(&u, &v)| inv * (u - mean_u - v * mean_uy)),
        );
    }
    Tensor::new(x.rows(), x.cols(), out).expect("layer_norm grad shape")
}
