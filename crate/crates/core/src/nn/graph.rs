//! Reverse-mode gradient tape.
//!
//! A [`Graph`] records every operation eagerly: values are computed when an
//! op is added and the op itself is kept so that [`Graph::backward`] can walk
//! the tape in reverse creation order. Graphs are cheap and meant to be
//! rebuilt for every training step.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f32),
    Neg(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Min(Var, Var),
    Clamp(Var, f32, f32),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Linear { .. } => "linear",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::AddScalar(..) => "add_scalar",
            Op::MulScalar(..) => "mul_scalar",
            Op::Neg(..) => "neg",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::LogSigmoid(..) => "log_sigmoid",
            Op::Softplus(..) => "softplus",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Square(..) => "square",
            Op::Min(..) => "min",
            Op::Clamp(..) => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Single-owner gradient tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    failure: Option<Error>,
}

/// Result of [`Graph::backward`]: one gradient buffer per reached node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros if the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Vec<f32> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.lens[var.0]],
        }
    }

    pub fn reached(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }

    /// Copies the gradient of each `vars[i]` into `params[i].grad`.
    pub fn assign(&self, vars: &[Var], params: &mut [Tensor]) -> Result<()> {
        if vars.len() != params.len() {
            return Err(Error::Dimension(format!(
                "{} vars for {} parameters",
                vars.len(),
                params.len()
            )));
        }
        for (v, p) in vars.iter().zip(params.iter_mut()) {
            if self.lens[v.0] != p.len() {
                return Err(Error::Dimension(format!(
                    "gradient of length {} for parameter of length {}",
                    self.lens[v.0],
                    p.len()
                )));
            }
            p.grad = Some(self.wrt(*v));
        }
        Ok(())
    }
}

/// `c = a · b (+ beta · c)` with arbitrary strides, row-major output.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (usize, usize),
    b: &[f32],
    b_strides: (usize, usize),
    c: &mut [f32],
    beta: f32,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].fill(0.0);
        }
        return;
    }
    debug_assert!(a.len() >= (m - 1) * a_strides.0 + (k - 1) * a_strides.1 + 1);
    debug_assert!(b.len() >= (k - 1) * b_strides.0 + (n - 1) * b_strides.1 + 1);
    // SAFETY: the asserts above bound every index the kernel touches and the
    // slices do not alias.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn accumulate<'a>(grads: &'a mut [Option<Vec<f32>>], idx: usize, len: usize) -> &'a mut Vec<f32> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// First numeric failure recorded on this tape, if any.
    pub fn check(&self) -> Result<()> {
        match &self.failure {
            Some(Error::Numeric(msg)) => Err(Error::Numeric(msg.clone())),
            Some(Error::Dimension(msg)) => Err(Error::Dimension(msg.clone())),
            Some(other) => Err(Error::Contract(other.to_string())),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            _ => self.parents(&op).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        if self.failure.is_none() && !value.is_finite() {
            self.failure = Some(Error::Numeric(format!("non-finite value produced by `{}`", op.name())));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn fail_dim(&mut self, msg: String, shape: &[usize]) -> Var {
        if self.failure.is_none() {
            self.failure = Some(Error::Dimension(msg));
        }
        // Placeholder keeps the tape well formed; backward refuses to run.
        let value = Tensor::zeros(shape);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn parents(&self, op: &Op) -> Vec<Var> {
        match *op {
            Op::Leaf => vec![],
            Op::Linear { x, w, b } => vec![x, w, b],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Min(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::Neg(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Clamp(a, _, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumCols(a)
            | Op::SliceCols(a, _, _) => vec![a],
        }
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.grad = None;
        self.push(value, Op::Leaf)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: &Tensor) -> Var {
        let v = self.constant(Tensor::new(value.shape().to_vec(), value.data().to_vec()).unwrap());
        self.nodes[v.0].needs_grad = true;
        v
    }

    /// Stop-gradient: a constant copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f32) -> f32) -> Var {
        let src = &self.nodes[a.0].value;
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).unwrap();
        self.push(value, op)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f32, f32) -> f32) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return self.fail_dim(format!("`{}` operands have shapes {sa:?} and {sb:?}", op.name()), &sa);
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(Tensor::new(sa, data).unwrap(), op)
    }

    /// `x · Wᵀ + b` with `x: [n, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs.iter().product::<usize>() != ws[0] {
            let rows = xs.first().copied().unwrap_or(1);
            let out = ws.first().copied().unwrap_or(1);
            return self.fail_dim(
                format!("linear: input {xs:?}, weight {ws:?}, bias {bs:?}"),
                &[rows, out],
            );
        }
        let (n, input, out) = (xs[0], xs[1], ws[0]);
        let bias = self.nodes[b.0].value.data();
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(bias);
        }
        gemm(
            n,
            input,
            out,
            self.nodes[x.0].value.data(),
            (input, 1),
            self.nodes[w.0].value.data(),
            (1, input),
            &mut y,
            1.0,
        );
        self.push(Tensor::matrix(n, out, y).unwrap(), Op::Linear { x, w, b })
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            let m = sa.first().copied().unwrap_or(1);
            let n = sb.get(1).copied().unwrap_or(1);
            return self.fail_dim(format!("matmul: {sa:?} x {sb:?}"), &[m, n]);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[a.0].value.data(),
            (k, 1),
            self.nodes[b.0].value.data(),
            (n, 1),
            &mut c,
            0.0,
        );
        self.push(Tensor::matrix(m, n, c).unwrap(), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Elementwise minimum. Gradient goes to the smaller operand, ties to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Min(a, b), |x, y| if x <= y { x } else { y })
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn mul_scalar(&mut self, a: Var, c: f32) -> Var {
        self.unary(a, Op::MulScalar(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f32::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// `log σ(x)`, computed without overflow.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::LogSigmoid(a), |x| -softplus(-x))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f32::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f32::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Clamp into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f32, hi: f32) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f32 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let n = t.len().max(1) as f32;
        let s: f32 = t.data().iter().sum::<f32>() / n;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Row sums: `[n, c] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let (n, c) = (t.rows(), t.cols());
        let data = t.data().chunks(c.max(1)).map(|r| r.iter().sum()).collect();
        self.push(Tensor::matrix(n, 1, data).unwrap(), Op::SumCols(a))
    }

    /// `[n, ca] ‖ [n, cb] -> [n, ca + cb]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rows() != tb.rows() {
            let shape = [ta.rows(), ta.cols() + tb.cols()];
            let msg = format!("concat_cols: {:?} and {:?}", ta.shape(), tb.shape());
            return self.fail_dim(msg, &shape);
        }
        let (n, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (ca + cb));
        for r in 0..n {
            data.extend_from_slice(&ta.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&tb.data()[r * cb..(r + 1) * cb]);
        }
        self.push(Tensor::matrix(n, ca + cb, data).unwrap(), Op::ConcatCols(a, b))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = &self.nodes[a.0].value;
        let (n, c) = (t.rows(), t.cols());
        if start >= end || end > c {
            let msg = format!("slice_cols {start}..{end} of {:?}", t.shape());
            return self.fail_dim(msg, &[n, end.saturating_sub(start).max(1)]);
        }
        let w = end - start;
        let mut data = Vec::with_capacity(n * w);
        for r in 0..n {
            data.extend_from_slice(&t.data()[r * c + start..r * c + end]);
        }
        self.push(Tensor::matrix(n, w, data).unwrap(), Op::SliceCols(a, start, end))
    }

    /// Mean squared error between two equally shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean(sq)
    }

    /// Mean binary cross-entropy of `logits` against a constant label.
    pub fn bce_with_logits(&mut self, logits: Var, label: f32) -> Var {
        // -[t log σ(x) + (1 - t) log σ(-x)]
        let pos = self.log_sigmoid(logits);
        let neg_logits = self.neg(logits);
        let neg = self.log_sigmoid(neg_logits);
        let a = self.mul_scalar(pos, label);
        let b = self.mul_scalar(neg, 1.0 - label);
        let s = self.add(a, b);
        let m = self.mean(s);
        self.neg(m)
    }

    /// Runs reverse-mode differentiation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check()?;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads, &lens);
        }
        Ok(Gradients { grads, lens })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn val(&self, v: Var) -> &[f32] {
        self.nodes[v.0].value.data()
    }

    fn backward_node(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>], lens: &[usize]) {
        let y = node.value.data();
        // Elementwise chain rule helper: grad[a] += g * d(x, y).
        let mut unary = |a: Var, d: &dyn Fn(f32, f32) -> f32| {
            if !self.wants(a) {
                return;
            }
            let x = self.val(a);
            let ga = accumulate(grads, a.0, lens[a.0]);
            for i in 0..ga.len() {
                ga[i] += g[i] * d(x[i], y[i]);
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::AddScalar(a) => unary(a, &|_, _| 1.0),
            Op::MulScalar(a, c) => unary(a, &|_, _| c),
            Op::Neg(a) => unary(a, &|_, _| -1.0),
            Op::Tanh(a) => unary(a, &|_, y| 1.0 - y * y),
            Op::Relu(a) => unary(a, &|x, _| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Sigmoid(a) => unary(a, &|_, y| y * (1.0 - y)),
            Op::LogSigmoid(a) => unary(a, &|x, _| sigmoid(-x)),
            Op::Softplus(a) => unary(a, &|x, _| sigmoid(x)),
            Op::Exp(a) => unary(a, &|_, y| y),
            Op::Log(a) => unary(a, &|x, _| 1.0 / x),
            Op::Square(a) => unary(a, &|x, _| 2.0 * x),
            Op::Clamp(a, lo, hi) => unary(a, &|x, _| if x >= lo && x <= hi { 1.0 } else { 0.0 }),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(a) {
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi);
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    gb.iter_mut().zip(g).for_each(|(d, &gi)| *d += sign * gi);
                }
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (self.val(a), self.val(b));
                if self.wants(a) {
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    for i in 0..ga.len() {
                        ga[i] += g[i] * xb[i];
                    }
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    for i in 0..gb.len() {
                        gb[i] += g[i] * xa[i];
                    }
                }
            }
            Op::Div(a, b) => {
                let (xa, xb) = (self.val(a), self.val(b));
                if self.wants(a) {
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    for i in 0..ga.len() {
                        ga[i] += g[i] / xb[i];
                    }
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    for i in 0..gb.len() {
                        gb[i] -= g[i] * xa[i] / (xb[i] * xb[i]);
                    }
                }
            }
            Op::Min(a, b) => {
                let (xa, xb) = (self.val(a), self.val(b));
                if self.wants(a) {
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    for i in 0..ga.len() {
                        if xa[i] <= xb[i] {
                            ga[i] += g[i];
                        }
                    }
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    for i in 0..gb.len() {
                        if xa[i] > xb[i] {
                            gb[i] += g[i];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if self.wants(a) {
                    accumulate(grads, a.0, lens[a.0]).iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(a) => {
                if self.wants(a) {
                    let scale = g[0] / lens[a.0].max(1) as f32;
                    accumulate(grads, a.0, lens[a.0]).iter_mut().for_each(|d| *d += scale);
                }
            }
            Op::SumCols(a) => {
                if self.wants(a) {
                    let c = self.nodes[a.0].value.cols().max(1);
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    for (r, row) in ga.chunks_mut(c).enumerate() {
                        row.iter_mut().for_each(|d| *d += g[r]);
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[a.0].value.cols();
                let cb = self.nodes[b.0].value.cols();
                let w = ca + cb;
                if self.wants(a) {
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    for (r, row) in ga.chunks_mut(ca.max(1)).enumerate() {
                        for (j, d) in row.iter_mut().enumerate() {
                            *d += g[r * w + j];
                        }
                    }
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    for (r, row) in gb.chunks_mut(cb.max(1)).enumerate() {
                        for (j, d) in row.iter_mut().enumerate() {
                            *d += g[r * w + ca + j];
                        }
                    }
                }
            }
            Op::SliceCols(a, start, end) => {
                if self.wants(a) {
                    let c = self.nodes[a.0].value.cols();
                    let w = end - start;
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    for (r, row) in ga.chunks_mut(c).enumerate() {
                        for j in 0..w {
                            row[start + j] += g[r * w + j];
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.nodes[x.0].value.shape();
                let (n, input) = (xs[0], xs[1]);
                let out = self.nodes[w.0].value.shape()[0];
                if self.wants(x) {
                    let gx = accumulate(grads, x.0, lens[x.0]);
                    gemm(n, out, input, g, (out, 1), self.val(w), (input, 1), gx, 1.0);
                }
                if self.wants(w) {
                    let gw = accumulate(grads, w.0, lens[w.0]);
                    gemm(out, n, input, g, (1, out), self.val(x), (input, 1), gw, 1.0);
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    for row in g.chunks(out) {
                        gb.iter_mut().zip(row).for_each(|(d, &gi)| *d += gi);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let sa = self.nodes[a.0].value.shape();
                let (m, k) = (sa[0], sa[1]);
                let n = self.nodes[b.0].value.shape()[1];
                if self.wants(a) {
                    let ga = accumulate(grads, a.0, lens[a.0]);
                    gemm(m, n, k, g, (n, 1), self.val(b), (1, n), ga, 1.0);
                }
                if self.wants(b) {
                    let gb = accumulate(grads, b.0, lens[b.0]);
                    gemm(k, m, n, self.val(a), (1, k), g, (n, 1), gb, 1.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn linear_map_gradient_is_outer_product() {
        // loss = sum(W x) for x fixed => dL/dW[o, i] = x[i]
        let mut g = Graph::new();
        let w = g.param(&t(&[2, 3], &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]));
        let b = g.param(&t(&[2], &[0.0, 0.0]));
        let x = g.constant(t(&[1, 3], &[1.0, 2.0, -3.0]));
        let y = g.linear(x, w, b);
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(w), vec![1.0, 2.0, -3.0, 1.0, 2.0, -3.0]);
        assert_eq!(grads.wrt(b), vec![1.0, 1.0]);
    }

    #[test]
    fn matmul_gradients() {
        let mut g = Graph::new();
        let a = g.param(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.param(&t(&[2, 1], &[5.0, 6.0]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);
        let loss = g.sum(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(a), vec![5.0, 6.0, 5.0, 6.0]);
        assert_eq!(grads.wrt(b), vec![4.0, 6.0]);
    }

    #[test]
    fn detached_value_gets_no_gradient() {
        let mut g = Graph::new();
        let p = g.param(&t(&[1, 2], &[0.5, -1.5]));
        let sq = g.square(p);
        let stopped = g.detach(sq);
        let prod = g.mul(stopped, p);
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        // Only the direct path through `p` contributes: d/dp (c * p) = c.
        assert_eq!(grads.wrt(p), vec![0.25, 2.25]);
        assert!(!grads.reached(stopped));
    }

    #[test]
    fn unreachable_param_has_zero_gradient() {
        let mut g = Graph::new();
        let p = g.param(&t(&[3], &[1.0, 2.0, 3.0]));
        let q = g.param(&t(&[2], &[1.0, 1.0]));
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(q), vec![0.0, 0.0]);
    }

    #[test]
    fn min_routes_ties_to_first_argument() {
        let mut g = Graph::new();
        let a = g.param(&t(&[3], &[1.0, 2.0, 3.0]));
        let b = g.param(&t(&[3], &[1.0, 1.0, 4.0]));
        let m = g.min(a, b);
        let loss = g.sum(m);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(a), vec![1.0, 0.0, 1.0]);
        assert_eq!(grads.wrt(b), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.param(&t(&[2], &[1.0, 2.0]));
        let y = g.square(p);
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_values_poison_the_tape() {
        let mut g = Graph::new();
        let p = g.param(&t(&[1], &[0.0]));
        let l = g.log(p);
        let loss = g.sum(l);
        assert!(matches!(g.check(), Err(Error::Numeric(_))));
        assert!(matches!(g.backward(loss), Err(Error::Numeric(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        g.add(a, b);
        assert!(matches!(g.check(), Err(Error::Dimension(_))));
    }

    #[test]
    fn bce_at_half_probability_is_ln2() {
        let mut g = Graph::new();
        let logits = g.constant(Tensor::zeros(&[4, 1]));
        let loss = g.bce_with_logits(logits, 1.0);
        let v = g.value(loss).item().unwrap();
        assert!((v - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let mut g = Graph::new();
        let a = g.param(&t(&[2, 1], &[1.0, 2.0]));
        let b = g.param(&t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = g.concat_cols(a, b);
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = g.slice_cols(c, 1, 3);
        assert_eq!(g.value(s).data(), &[3.0, 4.0, 5.0, 6.0]);
        let sq = g.square(s);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(a), vec![0.0, 0.0]);
        assert_eq!(grads.wrt(b), vec![6.0, 8.0, 10.0, 12.0]);
    }
}
