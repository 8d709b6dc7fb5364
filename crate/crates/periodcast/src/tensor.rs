//! Dense 64-bit float tensors plus a tape for reverse-mode differentiation.
//!
//! The tape records every operation of a forward pass; `Tape::backward`
//! replays the recorded rules in reverse and accumulates gradients into
//! every `requires_grad` leaf. A tape and its tensors are confined to one
//! thread; independent replicas (one per search worker) share nothing.

use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor of f64 values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; numel] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                // Box-Muller on two uniforms keeps us off rand_distr.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
            })
            .collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("from_rows: empty input".into()));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * c);
        for r in rows {
            if r.len() != c {
                return Err(Error::Shape("from_rows: ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor { shape: vec![rows.len(), c], data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// First dimension of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Second dimension of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let c = self.shape[1];
        self.data[i * c + j] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn is_2d(&self) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!("expected 2-D tensor, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }
}

/// Pointwise activation used by the attention gate and the feed-forward block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    #[default]
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
        }
    }
}

/// Padding rule for the time-axis convolution and the moving average.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Replicate,
    Zero,
}

// ── raw matrix kernels ──────────────────────────────────────────────

/// c(m,p) = a(m,n) · b(n,p), ikj loop order for cache locality.
pub(crate) fn mm(m: usize, n: usize, p: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let crow = &mut c[i * p..(i + 1) * p];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b[k * p..(k + 1) * p];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

/// c(m,p) = a(m,n) · b(p,n)ᵀ
fn mm_nt(m: usize, n: usize, p: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..p {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            c[i * p + j] += acc;
        }
    }
}

/// c(n,p) = a(m,n)ᵀ · b(m,p)
fn mm_tn(m: usize, n: usize, p: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for k in 0..m {
        let arow = &a[k * n..(k + 1) * n];
        let brow = &b[k * p..(k + 1) * p];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * p..(i + 1) * p];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// ── tape ────────────────────────────────────────────────────────────

pub struct BackCtx<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub grad: &'a Tensor,
}

type BackFn = Box<dyn Fn(&BackCtx<'_>) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackFn>,
    requires_grad: bool,
}

/// Records the operations of one forward pass. Cleared by dropping;
/// a fresh tape is built every training step.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}


/// Gradients produced by one backward pass, indexed by tape id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf; zeros when the leaf was unreachable from the loss.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&v.value().shape),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&self, value: Tensor, parents: Vec<usize>, backward: Option<BackFn>, leaf_grad: bool) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = if backward.is_none() {
            leaf_grad
        } else {
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        nodes.push(Node { value, parents, backward, requires_grad });
        nodes.len() - 1
    }

    /// A differentiable leaf (a model parameter).
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        let id = self.push(t, vec![], None, true);
        Var { tape: self, id }
    }

    /// A non-differentiable leaf (input data, dropout masks, targets).
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        let id = self.push(t, vec![], None, false);
        Var { tape: self, id }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Run the recorded backward rules in reverse from a scalar loss.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_node.value.shape
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::filled(loss_node.value.shape(), 1.0));
        for i in (0..=loss.id).rev() {
            let node = &nodes[i];
            let Some(back) = node.backward.as_ref() else { continue };
            let Some(g) = grads[i].clone() else { continue };
            let ctx = BackCtx {
                inputs: node.parents.iter().map(|&p| &nodes[p].value).collect(),
                output: &node.value,
                grad: &g,
            };
            let input_grads = back(&ctx);
            debug_assert_eq!(input_grads.len(), node.parents.len());
            for (&p, ig) in node.parents.iter().zip(input_grads) {
                if !nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(ig.data()) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(ig),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    /// Clone of the underlying value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    fn unary(&self, value: Tensor, back: BackFn) -> Var<'t> {
        let id = self.tape.push(value, vec![self.id], Some(back), false);
        Var { tape: self.tape, id }
    }

    fn binary(&self, other: Var<'t>, value: Tensor, back: BackFn) -> Var<'t> {
        let id = self.tape.push(value, vec![self.id, other.id], Some(back), false);
        Var { tape: self.tape, id }
    }

    // ── linear algebra ──────────────────────────────────────────────

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        let (n2, p) = rhs.with_value(|t| t.is_2d())?;
        if n != n2 {
            return Err(Error::Shape(format!(
                "matmul: ({m},{n}) x ({n2},{p}) inner dimensions differ"
            )));
        }
        let mut out = vec![0.0; m * p];
        self.with_value(|a| rhs.with_value(|b| mm(m, n, p, a.data(), b.data(), &mut out)));
        let value = Tensor { shape: vec![m, p], data: out };
        let back: BackFn = Box::new(move |ctx| {
            let a = ctx.inputs[0];
            let b = ctx.inputs[1];
            let mut da = vec![0.0; m * n];
            let mut db = vec![0.0; n * p];
            mm_nt(m, p, n, ctx.grad.data(), b.data(), &mut da);
            mm_tn(m, n, p, a.data(), ctx.grad.data(), &mut db);
            vec![
                Tensor { shape: vec![m, n], data: da },
                Tensor { shape: vec![n, p], data: db },
            ]
        });
        Ok(self.binary(rhs, value, back))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        let value = self.with_value(|t| {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = t.data()[i * n + j];
                }
            }
            Tensor { shape: vec![n, m], data: out }
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut out = vec![0.0; m * n];
            for j in 0..n {
                for i in 0..m {
                    out[i * n + j] = ctx.grad.data()[j * m + i];
                }
            }
            vec![Tensor { shape: vec![m, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    // ── elementwise ─────────────────────────────────────────────────

    fn same_shape(self, rhs: Var<'t>, op: &str) -> Result<Vec<usize>> {
        let a = self.shape();
        let b = rhs.shape();
        if a != b {
            return Err(Error::Shape(format!("{op}: shapes {a:?} and {b:?} differ")));
        }
        Ok(a)
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let shape = self.same_shape(rhs, "add")?;
        let value = self.with_value(|a| {
            rhs.with_value(|b| Tensor {
                shape: shape.clone(),
                data: a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
            })
        });
        let back: BackFn = Box::new(|ctx| vec![ctx.grad.clone(), ctx.grad.clone()]);
        Ok(self.binary(rhs, value, back))
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let shape = self.same_shape(rhs, "sub")?;
        let value = self.with_value(|a| {
            rhs.with_value(|b| Tensor {
                shape: shape.clone(),
                data: a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect(),
            })
        });
        let back: BackFn = Box::new(|ctx| {
            let neg = Tensor {
                shape: ctx.grad.shape().to_vec(),
                data: ctx.grad.data().iter().map(|g| -g).collect(),
            };
            vec![ctx.grad.clone(), neg]
        });
        Ok(self.binary(rhs, value, back))
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let shape = self.same_shape(rhs, "mul")?;
        let value = self.with_value(|a| {
            rhs.with_value(|b| Tensor {
                shape: shape.clone(),
                data: a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
            })
        });
        let back: BackFn = Box::new(|ctx| {
            let a = ctx.inputs[0];
            let b = ctx.inputs[1];
            let da = Tensor {
                shape: a.shape().to_vec(),
                data: ctx.grad.data().iter().zip(b.data()).map(|(g, y)| g * y).collect(),
            };
            let db = Tensor {
                shape: b.shape().to_vec(),
                data: ctx.grad.data().iter().zip(a.data()).map(|(g, x)| g * x).collect(),
            };
            vec![da, db]
        });
        Ok(self.binary(rhs, value, back))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = self.with_value(|t| Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|x| x * c).collect(),
        });
        let back: BackFn = Box::new(move |ctx| {
            vec![Tensor {
                shape: ctx.grad.shape().to_vec(),
                data: ctx.grad.data().iter().map(|g| g * c).collect(),
            }]
        });
        self.unary(value, back)
    }

    /// x(m,n) + bias(n), broadcast over rows.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        let bn = bias.with_value(|t| t.numel());
        if bn != n {
            return Err(Error::Shape(format!("add_bias: {n} columns vs bias length {bn}")));
        }
        let value = self.with_value(|a| {
            bias.with_value(|b| {
                let mut data = a.data().to_vec();
                for i in 0..m {
                    for j in 0..n {
                        data[i * n + j] += b.data()[j];
                    }
                }
                Tensor { shape: vec![m, n], data }
            })
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut db = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    db[j] += ctx.grad.data()[i * n + j];
                }
            }
            vec![ctx.grad.clone(), Tensor { shape: vec![n], data: db }]
        });
        Ok(self.binary(bias, value, back))
    }

    pub fn activation(self, act: Activation) -> Var<'t> {
        let value = self.with_value(|t| Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| act.apply(x)).collect(),
        });
        let back: BackFn = Box::new(move |ctx| {
            let x = ctx.inputs[0];
            vec![Tensor {
                shape: x.shape().to_vec(),
                data: x
                    .data()
                    .iter()
                    .zip(ctx.grad.data())
                    .map(|(&xi, &g)| g * act.derivative(xi))
                    .collect(),
            }]
        });
        self.unary(value, back)
    }

    // ── reductions ──────────────────────────────────────────────────

    pub fn mean_all(self) -> Var<'t> {
        let (n, mean) = self.with_value(|t| {
            (t.numel(), t.data().iter().sum::<f64>() / t.numel() as f64)
        });
        let value = Tensor::scalar(mean);
        let back: BackFn = Box::new(move |ctx| {
            let g = ctx.grad.data()[0] / n as f64;
            vec![Tensor { shape: ctx.inputs[0].shape().to_vec(), data: vec![g; n] }]
        });
        self.unary(value, back)
    }

    /// (m,n) -> (1,n), mean over rows.
    pub fn mean_axis0(self) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        let value = self.with_value(|t| {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    out[j] += t.data()[i * n + j];
                }
            }
            for v in &mut out {
                *v /= m as f64;
            }
            Tensor { shape: vec![1, n], data: out }
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] = ctx.grad.data()[j] / m as f64;
                }
            }
            vec![Tensor { shape: vec![m, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    /// (1,n) -> (m,n), repeat the single row.
    pub fn repeat_rows(self, m: usize) -> Result<Var<'t>> {
        let (r, n) = self.with_value(|t| t.is_2d())?;
        if r != 1 {
            return Err(Error::Shape(format!("repeat_rows expects (1,n), got ({r},{n})")));
        }
        let value = self.with_value(|t| {
            let mut data = Vec::with_capacity(m * n);
            for _ in 0..m {
                data.extend_from_slice(t.data());
            }
            Tensor { shape: vec![m, n], data }
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    out[j] += ctx.grad.data()[i * n + j];
                }
            }
            vec![Tensor { shape: vec![1, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    // ── softmax ─────────────────────────────────────────────────────

    /// Row-wise softmax of a 2-D tensor, stabilized by max subtraction.
    pub fn softmax_rows(self) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        let value = self.with_value(|t| {
            let mut data = vec![0.0; m * n];
            for i in 0..m {
                let row = &t.data()[i * n..(i + 1) * n];
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (row[j] - mx).exp();
                    data[i * n + j] = e;
                    sum += e;
                }
                for j in 0..n {
                    data[i * n + j] /= sum;
                }
            }
            Tensor { shape: vec![m, n], data }
        });
        let back: BackFn = Box::new(move |ctx| {
            let y = ctx.output;
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let yrow = &y.data()[i * n..(i + 1) * n];
                let grow = &ctx.grad.data()[i * n..(i + 1) * n];
                let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    out[i * n + j] = yrow[j] * (grow[j] - dot);
                }
            }
            vec![Tensor { shape: vec![m, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    /// Softmax along a chosen axis of a 2-D tensor.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        match axis {
            1 => self.softmax_rows(),
            0 => self.transpose()?.softmax_rows()?.transpose(),
            _ => Err(Error::Shape(format!("softmax: axis {axis} out of range for 2-D"))),
        }
    }

    // ── data movement ───────────────────────────────────────────────

    pub fn reshape(self, shape: Vec<usize>) -> Result<Var<'t>> {
        let numel = self.with_value(|t| t.numel());
        let target: usize = shape.iter().product();
        if target != numel {
            return Err(Error::Shape(format!(
                "reshape: cannot view {numel} elements as {shape:?}"
            )));
        }
        let value = self.with_value(|t| Tensor { shape: shape.clone(), data: t.data().to_vec() });
        let back: BackFn = Box::new(|ctx| {
            vec![Tensor {
                shape: ctx.inputs[0].shape().to_vec(),
                data: ctx.grad.data().to_vec(),
            }]
        });
        Ok(self.unary(value, back))
    }

    pub fn slice_rows(self, r0: usize, r1: usize) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        if r0 >= r1 || r1 > m {
            return Err(Error::Shape(format!("slice_rows: [{r0},{r1}) out of bounds for {m} rows")));
        }
        let value = self.with_value(|t| Tensor {
            shape: vec![r1 - r0, n],
            data: t.data()[r0 * n..r1 * n].to_vec(),
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut out = vec![0.0; m * n];
            out[r0 * n..r1 * n].copy_from_slice(ctx.grad.data());
            vec![Tensor { shape: vec![m, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    pub fn slice_cols(self, c0: usize, c1: usize) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        if c0 >= c1 || c1 > n {
            return Err(Error::Shape(format!("slice_cols: [{c0},{c1}) out of bounds for {n} cols")));
        }
        let w = c1 - c0;
        let value = self.with_value(|t| {
            let mut data = Vec::with_capacity(m * w);
            for i in 0..m {
                data.extend_from_slice(&t.data()[i * n + c0..i * n + c1]);
            }
            Tensor { shape: vec![m, w], data }
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                out[i * n + c0..i * n + c1].copy_from_slice(&ctx.grad.data()[i * w..(i + 1) * w]);
            }
            vec![Tensor { shape: vec![m, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    pub fn concat_rows(self, other: Var<'t>) -> Result<Var<'t>> {
        let (m1, n1) = self.with_value(|t| t.is_2d())?;
        let (m2, n2) = other.with_value(|t| t.is_2d())?;
        if n1 != n2 {
            return Err(Error::Shape(format!("concat_rows: widths {n1} and {n2} differ")));
        }
        let value = self.with_value(|a| {
            other.with_value(|b| {
                let mut data = a.data().to_vec();
                data.extend_from_slice(b.data());
                Tensor { shape: vec![m1 + m2, n1], data }
            })
        });
        let back: BackFn = Box::new(move |ctx| {
            let split = m1 * n1;
            vec![
                Tensor { shape: vec![m1, n1], data: ctx.grad.data()[..split].to_vec() },
                Tensor { shape: vec![m2, n1], data: ctx.grad.data()[split..].to_vec() },
            ]
        });
        Ok(self.binary(other, value, back))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        let (m1, n1) = self.with_value(|t| t.is_2d())?;
        let (m2, n2) = other.with_value(|t| t.is_2d())?;
        if m1 != m2 {
            return Err(Error::Shape(format!("concat_cols: heights {m1} and {m2} differ")));
        }
        let n = n1 + n2;
        let value = self.with_value(|a| {
            other.with_value(|b| {
                let mut data = Vec::with_capacity(m1 * n);
                for i in 0..m1 {
                    data.extend_from_slice(&a.data()[i * n1..(i + 1) * n1]);
                    data.extend_from_slice(&b.data()[i * n2..(i + 1) * n2]);
                }
                Tensor { shape: vec![m1, n], data }
            })
        });
        let back: BackFn = Box::new(move |ctx| {
            let mut da = vec![0.0; m1 * n1];
            let mut db = vec![0.0; m1 * n2];
            for i in 0..m1 {
                da[i * n1..(i + 1) * n1].copy_from_slice(&ctx.grad.data()[i * n..i * n + n1]);
                db[i * n2..(i + 1) * n2].copy_from_slice(&ctx.grad.data()[i * n + n1..(i + 1) * n]);
            }
            vec![
                Tensor { shape: vec![m1, n1], data: da },
                Tensor { shape: vec![m2, n2], data: db },
            ]
        });
        Ok(self.binary(other, value, back))
    }

    /// Prepend `count` copies of the first row (replicate padding).
    pub fn pad_rows_front(self, count: usize) -> Result<Var<'t>> {
        let (m, n) = self.with_value(|t| t.is_2d())?;
        let value = self.with_value(|t| {
            let mut data = Vec::with_capacity((m + count) * n);
            for _ in 0..count {
                data.extend_from_slice(&t.data()[..n]);
            }
            data.extend_from_slice(t.data());
            Tensor { shape: vec![m + count, n], data }
        });
        let back: BackFn = Box::new(move |ctx| {
            let g = ctx.grad.data();
            let mut out = vec![0.0; m * n];
            out.copy_from_slice(&g[count * n..]);
            for i in 0..count {
                for j in 0..n {
                    out[j] += g[i * n + j];
                }
            }
            vec![Tensor { shape: vec![m, n], data: out }]
        });
        Ok(self.unary(value, back))
    }

    // ── time-axis operators ─────────────────────────────────────────

    /// Moving average of kernel size `k` (odd) over the first axis,
    /// replicate-padded so the output length matches the input.
    pub fn moving_average(self, k: usize) -> Result<Var<'t>> {
        let (len, d) = self.with_value(|t| t.is_2d())?;
        if k == 0 || k % 2 == 0 {
            return Err(Error::Config(format!("moving average kernel must be odd, got {k}")));
        }
        let h = (k / 2) as isize;
        let clamp = move |t: isize| t.clamp(0, len as isize - 1) as usize;
        let value = self.with_value(|t| {
            let x = t.data();
            let mut out = vec![0.0; len * d];
            for tt in 0..len as isize {
                for off in -h..=h {
                    let src = clamp(tt + off) * d;
                    let dst = tt as usize * d;
                    for j in 0..d {
                        out[dst + j] += x[src + j];
                    }
                }
            }
            let inv = 1.0 / k as f64;
            for v in &mut out {
                *v *= inv;
            }
            Tensor { shape: vec![len, d], data: out }
        });
        let back: BackFn = Box::new(move |ctx| {
            let g = ctx.grad.data();
            let mut out = vec![0.0; len * d];
            let inv = 1.0 / k as f64;
            for tt in 0..len as isize {
                for off in -h..=h {
                    let src = clamp(tt + off) * d;
                    let dst = tt as usize * d;
                    for j in 0..d {
                        out[src + j] += g[dst + j] * inv;
                    }
                }
            }
            vec![Tensor { shape: vec![len, d], data: out }]
        });
        Ok(self.unary(value, back))
    }

    /// 1-D convolution over the time axis: x(len, c_in) * w(k, c_in, c_out),
    /// stride 1, odd kernel, same-length output.
    pub fn conv1d(self, weight: Var<'t>, pad: PadMode) -> Result<Var<'t>> {
        let (len, c_in) = self.with_value(|t| t.is_2d())?;
        let wshape = weight.shape();
        if wshape.len() != 3 {
            return Err(Error::Shape(format!("conv1d weight must be 3-D, got {wshape:?}")));
        }
        let (k, wc_in, c_out) = (wshape[0], wshape[1], wshape[2]);
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv1d kernel must be odd, got {k}")));
        }
        if wc_in != c_in {
            return Err(Error::Shape(format!(
                "conv1d: input has {c_in} channels, weight expects {wc_in}"
            )));
        }
        let h = (k / 2) as isize;
        // Maps a padded index to Some(row) or None (zero padding).
        let src_row = move |t: isize| -> Option<usize> {
            if t >= 0 && t < len as isize {
                Some(t as usize)
            } else {
                match pad {
                    PadMode::Replicate => Some(t.clamp(0, len as isize - 1) as usize),
                    PadMode::Zero => None,
                }
            }
        };
        let value = self.with_value(|xt| {
            weight.with_value(|wt| {
                let x = xt.data();
                let w = wt.data();
                let mut out = vec![0.0; len * c_out];
                for t in 0..len as isize {
                    for j in 0..k {
                        let Some(src) = src_row(t + j as isize - h) else { continue };
                        let xrow = &x[src * c_in..(src + 1) * c_in];
                        let orow = &mut out[t as usize * c_out..(t as usize + 1) * c_out];
                        for (ci, &xv) in xrow.iter().enumerate() {
                            let wrow = &w[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                            for (ov, &wv) in orow.iter_mut().zip(wrow) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
                Tensor { shape: vec![len, c_out], data: out }
            })
        });
        let back: BackFn = Box::new(move |ctx| {
            let x = ctx.inputs[0].data();
            let w = ctx.inputs[1].data();
            let g = ctx.grad.data();
            let mut dx = vec![0.0; len * c_in];
            let mut dw = vec![0.0; k * c_in * c_out];
            for t in 0..len as isize {
                let grow = &g[t as usize * c_out..(t as usize + 1) * c_out];
                for j in 0..k {
                    let Some(src) = src_row(t + j as isize - h) else { continue };
                    let xrow = &x[src * c_in..(src + 1) * c_in];
                    for ci in 0..c_in {
                        let wrow = &w[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                        let mut acc = 0.0;
                        for (gv, wv) in grow.iter().zip(wrow) {
                            acc += gv * wv;
                        }
                        dx[src * c_in + ci] += acc;
                        let dwrow = &mut dw[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                        for (dv, gv) in dwrow.iter_mut().zip(grow) {
                            *dv += xrow[ci] * gv;
                        }
                    }
                }
            }
            vec![
                Tensor { shape: vec![len, c_in], data: dx },
                Tensor { shape: vec![k, c_in, c_out], data: dw },
            ]
        });
        Ok(self.binary(weight, value, back))
    }

    // ── losses ──────────────────────────────────────────────────────

    /// Mean absolute deviation over all elements.
    pub fn l1_loss(self, target: Var<'t>) -> Result<Var<'t>> {
        let shape = self.same_shape(target, "l1_loss")?;
        let n: usize = shape.iter().product();
        let value = self.with_value(|a| {
            target.with_value(|b| {
                let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
                Tensor::scalar(s / n as f64)
            })
        });
        let back: BackFn = Box::new(move |ctx| {
            let a = ctx.inputs[0];
            let b = ctx.inputs[1];
            let g = ctx.grad.data()[0] / n as f64;
            let da: Vec<f64> = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| g * (x - y).signum())
                .collect();
            let db: Vec<f64> = da.iter().map(|v| -v).collect();
            vec![
                Tensor { shape: a.shape().to_vec(), data: da },
                Tensor { shape: b.shape().to_vec(), data: db },
            ]
        });
        Ok(self.binary(target, value, back))
    }
}
