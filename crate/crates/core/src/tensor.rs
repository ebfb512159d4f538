//! Dense real/complex tensors and a reverse-mode tape.
//!
//! The tape records coarse operations (linear maps, activations, the Laplace
//! and spectral convolution layers, the relative-L2 loss); each op carries a
//! hand-derived vector-Jacobian product. Gradients of complex parameters use
//! the steepest-ascent convention: grad = dL/dRe + i dL/dIm, so the update
//! theta <- theta - eta * grad decreases a real loss to first order and
//! finite-difference checks on Re/Im parts are literal.
//!
//! A tape owns every intermediate value; tensors are referenced by id. Tapes
//! are single-worker objects: build one per training step and drop it after
//! reading the gradients.

use crate::error::{Error, Result};
use crate::laplace::{Laplace1dSaved, Laplace2dSaved};
use crate::spectral::{Spectral1dSaved, Spectral2dSaved};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Element type of a tensor.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Dtype {
    Real,
    Complex,
}

/// Flat row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub enum Storage {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Dense n-dimensional array, dtype real-64 or complex-128.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorData {
    shape: Vec<usize>,
    storage: Storage,
}

impl TensorData {
    pub fn from_real(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(TensorData {
            shape,
            storage: Storage::Real(data),
        })
    }

    pub fn from_complex(data: Vec<Complex64>, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(TensorData {
            shape,
            storage: Storage::Complex(data),
        })
    }

    pub fn zeros(shape: &[usize], dtype: Dtype) -> Self {
        let numel = shape.iter().product();
        let storage = match dtype {
            Dtype::Real => Storage::Real(vec![0.0; numel]),
            Dtype::Complex => Storage::Complex(vec![Complex64::default(); numel]),
        };
        TensorData {
            shape: shape.to_vec(),
            storage,
        }
    }

    pub fn scalar(v: f64) -> Self {
        TensorData {
            shape: vec![],
            storage: Storage::Real(vec![v]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dtype(&self) -> Dtype {
        match self.storage {
            Storage::Real(_) => Dtype::Real,
            Storage::Complex(_) => Dtype::Complex,
        }
    }

    pub fn real(&self) -> Result<&[f64]> {
        match &self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::contract("tensor", "expected real dtype")),
        }
    }

    pub fn complex(&self) -> Result<&[Complex64]> {
        match &self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::contract("tensor", "expected complex dtype")),
        }
    }

    pub fn real_mut(&mut self) -> Result<&mut [f64]> {
        match &mut self.storage {
            Storage::Real(v) => Ok(v),
            Storage::Complex(_) => Err(Error::contract("tensor", "expected real dtype")),
        }
    }

    pub fn complex_mut(&mut self) -> Result<&mut [Complex64]> {
        match &mut self.storage {
            Storage::Complex(v) => Ok(v),
            Storage::Real(_) => Err(Error::contract("tensor", "expected complex dtype")),
        }
    }

    /// Scalar extraction for 0-d / 1-element real tensors.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::contract("tensor", "expected a scalar"));
        }
        Ok(self.real()?[0])
    }

    /// A cheap whole-tensor finiteness check: a single sum poisons on any
    /// NaN/Inf element.
    pub fn is_finite(&self) -> bool {
        match &self.storage {
            Storage::Real(v) => v.iter().sum::<f64>().is_finite(),
            Storage::Complex(v) => {
                let (re, im) = v.iter().fold((0.0f64, 0.0f64), |(a, b), c| (a + c.re, b + c.im));
                re.is_finite() && im.is_finite()
            }
        }
    }

    fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                op,
                detail: "output contains NaN or Inf".into(),
            })
        }
    }

    /// Flat element count of the non-batch tail given a leading batch axis.
    pub fn per_sample(&self) -> usize {
        if self.shape.is_empty() {
            1
        } else {
            self.shape[1..].iter().product()
        }
    }
}

/// Elementwise activations used by the operator models.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sin,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => Ok(Activation::Sin),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::UnknownOption {
                what: "activation",
                value: other.into(),
                valid: "sin, tanh",
            }),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Sin => "sin",
            Activation::Tanh => "tanh",
        })
    }
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

enum Value {
    Owned(TensorData),
    Shared(Arc<TensorData>),
}

impl Value {
    fn get(&self) -> &TensorData {
        match self {
            Value::Owned(t) => t,
            Value::Shared(t) => t,
        }
    }
}

pub(crate) enum Op {
    Leaf,
    Linear {
        x: TensorId,
        w: TensorId,
        b: TensorId,
    },
    Matmul {
        x: TensorId,
        w: TensorId,
    },
    Activation {
        x: TensorId,
        kind: Activation,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    SumSquares {
        x: TensorId,
    },
    MeanRelL2 {
        pred: TensorId,
        target: TensorData,
        /// Per-sample (diff_norm, target_norm) saved by the forward pass.
        norms: Vec<(f64, f64)>,
    },
    Laplace1d {
        v: TensorId,
        poles: TensorId,
        residues: TensorId,
        saved: Box<Laplace1dSaved>,
    },
    Laplace2d {
        v: TensorId,
        poles0: TensorId,
        poles1: TensorId,
        residues: TensorId,
        saved: Box<Laplace2dSaved>,
    },
    SpectralConv1d {
        v: TensorId,
        w: TensorId,
        saved: Box<Spectral1dSaved>,
    },
    SpectralConv2d {
        v: TensorId,
        w: TensorId,
        saved: Box<Spectral2dSaved>,
    },
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
    needs_grad: bool,
    grad: Option<TensorData>,
}

/// Reverse-mode tape. Operation ids are appended in execution order, so the
/// reverse sweep over ids is a valid topological order and visits each node
/// exactly once; fan-out accumulates gradients additively.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Value, op: Op, requires_grad: bool, needs_grad: bool) -> TensorId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            needs_grad,
            grad: None,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Record a leaf tensor. `requires_grad` marks it as a trainable
    /// parameter for the reverse sweep.
    pub fn leaf(&mut self, t: TensorData, requires_grad: bool) -> TensorId {
        self.push(Value::Owned(t), Op::Leaf, requires_grad, requires_grad)
    }

    /// Record a shared (reference-counted) trainable leaf without copying.
    pub fn parameter(&mut self, t: Arc<TensorData>) -> TensorId {
        self.push(Value::Shared(t), Op::Leaf, true, true)
    }

    pub fn value(&self, id: TensorId) -> &TensorData {
        self.nodes[id.0].value.get()
    }

    pub fn grad(&self, id: TensorId) -> Option<&TensorData> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn needs(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// out[r, j] = sum_k x[r, k] w[k, j] + b[j], over the last axis of `x`.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let out = {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            if !wv.is_finite() || !bv.is_finite() {
                return Err(Error::contract("linear", "weights/bias must be finite"));
            }
            linear_forward(xv, wv, Some(bv))?
        };
        out.check_finite("linear")?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(Value::Owned(out), Op::Linear { x, w, b }, false, needs))
    }

    /// Bias-free pointwise linear map (the bypass W of the operator blocks).
    pub fn matmul(&mut self, x: TensorId, w: TensorId) -> Result<TensorId> {
        let out = linear_forward(self.value(x), self.value(w), None)?;
        out.check_finite("matmul")?;
        let needs = self.needs(&[x, w]);
        Ok(self.push(Value::Owned(out), Op::Matmul { x, w }, false, needs))
    }

    pub fn activation(&mut self, x: TensorId, kind: Activation) -> Result<TensorId> {
        let xv = self.value(x).real()?;
        let data: Vec<f64> = match kind {
            Activation::Sin => xv.iter().map(|v| v.sin()).collect(),
            Activation::Tanh => xv.iter().map(|v| v.tanh()).collect(),
        };
        let out = TensorData::from_real(data, self.value(x).shape().to_vec())?;
        out.check_finite("activation")?;
        let needs = self.needs(&[x]);
        Ok(self.push(Value::Owned(out), Op::Activation { x, kind }, false, needs))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            if av.shape() != bv.shape() || av.dtype() != bv.dtype() {
                return Err(Error::shape(
                    "add",
                    format!("{:?} vs {:?}", av.shape(), bv.shape()),
                ));
            }
            match (&av.storage, &bv.storage) {
                (Storage::Real(x), Storage::Real(y)) => TensorData::from_real(
                    x.iter().zip(y).map(|(u, v)| u + v).collect(),
                    av.shape().to_vec(),
                )?,
                (Storage::Complex(x), Storage::Complex(y)) => TensorData::from_complex(
                    x.iter().zip(y).map(|(u, v)| u + v).collect(),
                    av.shape().to_vec(),
                )?,
                _ => unreachable!("dtype checked above"),
            }
        };
        out.check_finite("add")?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(Value::Owned(out), Op::Add { a, b }, false, needs))
    }

    /// Scalar sum of squares of a real tensor (test / toy-loss helper).
    pub fn sum_squares(&mut self, x: TensorId) -> Result<TensorId> {
        let s: f64 = self.value(x).real()?.iter().map(|v| v * v).sum();
        let out = TensorData::scalar(s);
        out.check_finite("sum_squares")?;
        let needs = self.needs(&[x]);
        Ok(self.push(Value::Owned(out), Op::SumSquares { x }, false, needs))
    }

    /// Mean over the leading (batch) axis of per-sample relative L2 errors:
    /// loss = (1/B) sum_b ||pred_b - target_b|| / ||target_b||.
    pub fn mean_relative_l2(&mut self, pred: TensorId, target: &TensorData) -> Result<TensorId> {
        let (loss, norms) = {
            let pv = self.value(pred);
            if pv.shape() != target.shape() {
                return Err(Error::shape(
                    "relative_l2",
                    format!("{:?} vs {:?}", pv.shape(), target.shape()),
                ));
            }
            let p = pv.real()?;
            let t = target.real()?;
            let batch = if pv.shape().is_empty() { 1 } else { pv.shape()[0] };
            let stride = pv.per_sample();
            let mut norms = Vec::with_capacity(batch);
            let mut acc = 0.0;
            for bi in 0..batch {
                let (mut dn, mut tn) = (0.0f64, 0.0f64);
                for k in 0..stride {
                    let d = p[bi * stride + k] - t[bi * stride + k];
                    dn += d * d;
                    tn += t[bi * stride + k] * t[bi * stride + k];
                }
                let (dn, tn) = (dn.sqrt(), tn.sqrt());
                if tn == 0.0 {
                    return Err(Error::DegenerateTarget { sample: bi });
                }
                norms.push((dn, tn));
                acc += dn / tn;
            }
            (acc / batch as f64, norms)
        };
        let out = TensorData::scalar(loss);
        out.check_finite("relative_l2")?;
        let needs = self.needs(&[pred]);
        Ok(self.push(
            Value::Owned(out),
            Op::MeanRelL2 {
                pred,
                target: target.clone(),
                norms,
            },
            false,
            needs,
        ))
    }

    pub(crate) fn push_op(&mut self, value: TensorData, op: Op, parents: &[TensorId]) -> TensorId {
        let needs = self.needs(parents);
        self.push(Value::Owned(value), op, false, needs)
    }

    /// Run the reverse sweep from a real scalar loss. Gradients accumulate on
    /// every node on a path to a `requires_grad` leaf; leaves the loss does
    /// not depend on receive explicit zeros.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        {
            let lv = self.value(loss);
            if lv.numel() != 1 || lv.dtype() != Dtype::Real {
                return Err(Error::contract(
                    "backward",
                    "loss must be a real scalar reachable from the leaves",
                ));
            }
        }
        self.nodes[loss.0].grad = Some(TensorData::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let grad = self.nodes[i].grad.take().expect("grad checked above");
            let contributions = self.backward_op(i, &grad)?;
            self.nodes[i].grad = Some(grad);
            for (pid, contrib) in contributions {
                accumulate(&mut self.nodes[pid.0].grad, contrib)?;
            }
        }
        // L independent of a parameter still means grad = 0, not "absent".
        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(TensorData::zeros(node.value.get().shape(), node.value.get().dtype()));
            }
        }
        Ok(())
    }

    fn backward_op(&self, idx: usize, grad: &TensorData) -> Result<Vec<(TensorId, TensorData)>> {
        let node = &self.nodes[idx];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (gx, gw, gb) =
                    linear_backward(self.value(*x), self.value(*w), grad, true)?;
                if self.nodes[x.0].needs_grad {
                    out.push((*x, gx));
                }
                if self.nodes[w.0].needs_grad {
                    out.push((*w, gw));
                }
                if self.nodes[b.0].needs_grad {
                    out.push((*b, gb.expect("bias gradient requested")));
                }
            }
            Op::Matmul { x, w } => {
                let (gx, gw, _) = linear_backward(self.value(*x), self.value(*w), grad, false)?;
                if self.nodes[x.0].needs_grad {
                    out.push((*x, gx));
                }
                if self.nodes[w.0].needs_grad {
                    out.push((*w, gw));
                }
            }
            Op::Activation { x, kind } => {
                if self.nodes[x.0].needs_grad {
                    let xv = self.value(*x).real()?;
                    let yv = node.value.get().real()?;
                    let g = grad.real()?;
                    let data: Vec<f64> = match kind {
                        Activation::Sin => {
                            xv.iter().zip(g).map(|(v, gi)| gi * v.cos()).collect()
                        }
                        // d tanh = 1 - tanh^2, read from the saved output.
                        Activation::Tanh => {
                            yv.iter().zip(g).map(|(y, gi)| gi * (1.0 - y * y)).collect()
                        }
                    };
                    out.push((*x, TensorData::from_real(data, grad.shape().to_vec())?));
                }
            }
            Op::Add { a, b } => {
                if self.nodes[a.0].needs_grad {
                    out.push((*a, grad.clone()));
                }
                if self.nodes[b.0].needs_grad {
                    out.push((*b, grad.clone()));
                }
            }
            Op::SumSquares { x } => {
                if self.nodes[x.0].needs_grad {
                    let g = grad.scalar_value()?;
                    let xs = self.value(*x).real()?;
                    let data: Vec<f64> = xs.iter().map(|v| 2.0 * v * g).collect();
                    out.push((*x, TensorData::from_real(data, self.value(*x).shape().to_vec())?));
                }
            }
            Op::MeanRelL2 { pred, target, norms } => {
                if self.nodes[pred.0].needs_grad {
                    let g = grad.scalar_value()?;
                    let p = self.value(*pred).real()?;
                    let t = target.real()?;
                    let batch = norms.len();
                    let stride = self.value(*pred).per_sample();
                    let mut data = vec![0.0f64; p.len()];
                    for (bi, &(dn, tn)) in norms.iter().enumerate() {
                        if dn == 0.0 {
                            continue; // exact prediction: flat subgradient
                        }
                        let scale = g / (batch as f64 * dn * tn);
                        for k in 0..stride {
                            let off = bi * stride + k;
                            data[off] = scale * (p[off] - t[off]);
                        }
                    }
                    out.push((*pred, TensorData::from_real(data, self.value(*pred).shape().to_vec())?));
                }
            }
            Op::Laplace1d {
                v,
                poles,
                residues,
                saved,
            } => {
                let grads = crate::laplace::backward_1d(saved, grad)?;
                if self.nodes[v.0].needs_grad {
                    out.push((*v, grads.v));
                }
                if self.nodes[poles.0].needs_grad {
                    out.push((*poles, grads.poles));
                }
                if self.nodes[residues.0].needs_grad {
                    out.push((*residues, grads.residues));
                }
            }
            Op::Laplace2d {
                v,
                poles0,
                poles1,
                residues,
                saved,
            } => {
                let grads = crate::laplace::backward_2d(saved, grad)?;
                if self.nodes[v.0].needs_grad {
                    out.push((*v, grads.v));
                }
                if self.nodes[poles0.0].needs_grad {
                    out.push((*poles0, grads.poles0));
                }
                if self.nodes[poles1.0].needs_grad {
                    out.push((*poles1, grads.poles1));
                }
                if self.nodes[residues.0].needs_grad {
                    out.push((*residues, grads.residues));
                }
            }
            Op::SpectralConv1d { v, w, saved } => {
                let grads = crate::spectral::backward_1d(saved, grad)?;
                if self.nodes[v.0].needs_grad {
                    out.push((*v, grads.v));
                }
                if self.nodes[w.0].needs_grad {
                    out.push((*w, grads.w));
                }
            }
            Op::SpectralConv2d { v, w, saved } => {
                let grads = crate::spectral::backward_2d(saved, grad)?;
                if self.nodes[v.0].needs_grad {
                    out.push((*v, grads.v));
                }
                if self.nodes[w.0].needs_grad {
                    out.push((*w, grads.w));
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(dst: &mut Option<TensorData>, contrib: TensorData) -> Result<()> {
    match dst {
        None => *dst = Some(contrib),
        Some(acc) => {
            if acc.shape() != contrib.shape() {
                return Err(Error::shape("grad-accumulate", "shape drift between contributions"));
            }
            match (&mut acc.storage, &contrib.storage) {
                (Storage::Real(a), Storage::Real(b)) => {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
                (Storage::Complex(a), Storage::Complex(b)) => {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                }
                _ => return Err(Error::contract("grad-accumulate", "dtype drift")),
            }
        }
    }
    Ok(())
}

/// Row-major real GEMM helper: C = A(m,k) . B(k,n) (+ existing C when beta=1).
fn dgemm_rm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    debug_assert!(c.len() == m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn linear_forward(x: &TensorData, w: &TensorData, b: Option<&TensorData>) -> Result<TensorData> {
    let xs = x.real().map_err(|_| Error::contract("linear", "x must be real"))?;
    let ws = w.real().map_err(|_| Error::contract("linear", "w must be real"))?;
    if w.shape().len() != 2 {
        return Err(Error::shape("linear", format!("w must be rank-2, got {:?}", w.shape())));
    }
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    if x.shape().last().copied().unwrap_or(0) != n_in {
        return Err(Error::shape(
            "linear",
            format!("x trailing dim {:?} vs w {:?}", x.shape(), w.shape()),
        ));
    }
    let rows = x.numel() / n_in;
    let mut out = vec![0.0f64; rows * n_out];
    dgemm_rm(rows, n_in, n_out, xs, n_in as isize, 1, ws, n_out as isize, 1, &mut out);
    if let Some(bias) = b {
        let bs = bias.real()?;
        if bias.shape() != [n_out] {
            return Err(Error::shape(
                "linear",
                format!("bias {:?} vs n_out {}", bias.shape(), n_out),
            ));
        }
        for r in 0..rows {
            for (j, bj) in bs.iter().enumerate() {
                out[r * n_out + j] += bj;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("x rank >= 1") = n_out;
    TensorData::from_real(out, shape)
}

fn linear_backward(
    x: &TensorData,
    w: &TensorData,
    grad: &TensorData,
    with_bias: bool,
) -> Result<(TensorData, TensorData, Option<TensorData>)> {
    let xs = x.real()?;
    let ws = w.real()?;
    let gs = grad.real()?;
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    let rows = x.numel() / n_in;

    // g_x = g . W^T
    let mut gx = vec![0.0f64; rows * n_in];
    dgemm_rm(rows, n_out, n_in, gs, n_out as isize, 1, ws, 1, n_out as isize, &mut gx);
    // g_w = X^T . g
    let mut gw = vec![0.0f64; n_in * n_out];
    dgemm_rm(n_in, rows, n_out, xs, 1, n_in as isize, gs, n_out as isize, 1, &mut gw);

    let gb = if with_bias {
        let mut gb = vec![0.0f64; n_out];
        for r in 0..rows {
            for (j, acc) in gb.iter_mut().enumerate() {
                *acc += gs[r * n_out + j];
            }
        }
        Some(TensorData::from_real(gb, vec![n_out])?)
    } else {
        None
    };
    Ok((
        TensorData::from_real(gx, x.shape().to_vec())?,
        TensorData::from_real(gw, w.shape().to_vec())?,
        gb,
    ))
}

/// Whole-tensor relative L2 error for one sample: ||pred - target|| / ||target||.
pub fn relative_l2(pred: &TensorData, target: &TensorData) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "relative_l2",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let p = pred.real()?;
    let t = target.real()?;
    let mut dn = 0.0;
    let mut tn = 0.0;
    for (a, b) in p.iter().zip(t) {
        dn += (a - b) * (a - b);
        tn += b * b;
    }
    if tn == 0.0 {
        return Err(Error::DegenerateTarget { sample: 0 });
    }
    Ok((dn / tn).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(data: &[f64]) -> TensorData {
        TensorData::from_real(data.to_vec(), vec![data.len()]).unwrap()
    }

    fn t2(data: &[f64], r: usize, c: usize) -> TensorData {
        TensorData::from_real(data.to_vec(), vec![r, c]).unwrap()
    }

    #[test]
    fn linear_identity_and_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[1.0, 2.0], 1, 2), false);
        let w = tape.leaf(t2(&[1.0, 0.0, 0.0, 1.0], 2, 2), false);
        let b = tape.leaf(t1(&[0.0, 0.0]), false);
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.value(y).real().unwrap(), &[1.0, 2.0]);

        let w0 = tape.leaf(t2(&[0.0; 4], 2, 2), false);
        let b2 = tape.leaf(t1(&[3.0, 4.0]), false);
        let y2 = tape.linear(x, w0, b2).unwrap();
        assert_eq!(tape.value(y2).real().unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn linear_matches_triple_loop_oracle() {
        // Random 5x3 . 3x2 against a naive triple loop, exact to 1e-14.
        let mut state = 3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let xs: Vec<f64> = (0..15).map(|_| next()).collect();
        let ws: Vec<f64> = (0..6).map(|_| next()).collect();
        let bs: Vec<f64> = (0..2).map(|_| next()).collect();
        let mut want = vec![0.0; 10];
        for i in 0..5 {
            for j in 0..2 {
                let mut acc = bs[j];
                for k in 0..3 {
                    acc += xs[i * 3 + k] * ws[k * 2 + j];
                }
                want[i * 2 + j] = acc;
            }
        }
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&xs, 5, 3), false);
        let w = tape.leaf(t2(&ws, 3, 2), false);
        let b = tape.leaf(t1(&bs), false);
        let y = tape.linear(x, w, b).unwrap();
        for (a, b) in tape.value(y).real().unwrap().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn linear_shape_mismatch_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[1.0, 2.0], 1, 2), false);
        let w = tape.leaf(t2(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 3, 2), false);
        let b = tape.leaf(t1(&[0.0, 0.0]), false);
        assert!(matches!(tape.linear(x, w, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn activations_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[0.0]), false);
        let s = tape.activation(x, Activation::Sin).unwrap();
        let th = tape.activation(x, Activation::Tanh).unwrap();
        assert_eq!(tape.value(s).real().unwrap()[0], 0.0);
        assert_eq!(tape.value(th).real().unwrap()[0], 0.0);
        assert!("relu".parse::<Activation>().is_err());
    }

    #[test]
    fn sin_gradient_matches_central_difference() {
        let x0 = 0.3;
        let grad = {
            let mut tape = Tape::new();
            let x = tape.leaf(t1(&[x0]), true);
            let y = tape.activation(x, Activation::Sin).unwrap();
            let loss = tape.sum_squares(y).unwrap(); // (sin x)^2 keeps it scalar
            tape.backward(loss).unwrap();
            tape.grad(x).unwrap().real().unwrap()[0]
        };
        let f = |v: f64| v.sin() * v.sin();
        let h = 1e-6;
        let fd = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        assert!(((grad - fd) / fd).abs() <= 1e-8, "{grad} vs {fd}");
    }

    #[test]
    fn quadratic_loss_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        let loss = tape.sum_squares(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().real().unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        let unused = tape.leaf(t1(&[5.0]), true);
        let loss = tape.sum_squares(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(unused).unwrap().real().unwrap(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        assert!(matches!(tape.backward(x), Err(Error::Contract { .. })));
    }

    #[test]
    fn relative_l2_basics() {
        let a = t1(&[1.0, 2.0, 3.0]);
        let b = t1(&[1.0, 2.0, 3.0]);
        assert_eq!(relative_l2(&a, &b).unwrap(), 0.0);
        let zero = t1(&[0.0, 0.0, 0.0]);
        assert!((relative_l2(&zero, &b).unwrap() - 1.0).abs() < 1e-15);
        let twice = t1(&[2.0, 4.0, 6.0]);
        assert!((relative_l2(&twice, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            relative_l2(&a, &zero),
            Err(Error::DegenerateTarget { .. })
        ));
    }

    #[test]
    fn mean_rel_l2_gradient_matches_fd() {
        let pred0 = [0.4, -0.2, 0.9, 1.4];
        let target = t2(&[0.1, 0.3, 1.0, 0.7], 2, 2);
        let grad = {
            let mut tape = Tape::new();
            let p = tape.leaf(t2(&pred0, 2, 2), true);
            let loss = tape.mean_relative_l2(p, &target).unwrap();
            tape.backward(loss).unwrap();
            tape.grad(p).unwrap().real().unwrap().to_vec()
        };
        let f = |p: &[f64]| {
            let mut acc = 0.0;
            for b in 0..2 {
                let dn = ((p[2 * b] - target.real().unwrap()[2 * b]).powi(2)
                    + (p[2 * b + 1] - target.real().unwrap()[2 * b + 1]).powi(2))
                .sqrt();
                let tn = (target.real().unwrap()[2 * b].powi(2)
                    + target.real().unwrap()[2 * b + 1].powi(2))
                .sqrt();
                acc += dn / tn;
            }
            acc / 2.0
        };
        let h = 1e-6;
        for i in 0..4 {
            let mut up = pred0;
            let mut dn = pred0;
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!(
                ((grad[i] - fd) / fd.abs().max(1e-9)).abs() <= 1e-5,
                "i={i} {} vs {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn fanout_accumulates_additively() {
        // loss = sum((x + x)^2) = 4 sum(x^2) -> grad = 8x.
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, -2.0]), true);
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum_squares(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().real().unwrap(), &[8.0, -16.0]);
    }

    #[test]
    fn non_finite_forward_raises() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0e308, 1.0e308]), false);
        let w = tape.leaf(t2(&[1.0e308, 0.0, 0.0, 1.0], 2, 2), false);
        let b = tape.leaf(t1(&[0.0, 0.0]), false);
        assert!(matches!(
            tape.linear(x, w, b),
            Err(Error::NonFinite { .. }) | Err(Error::Contract { .. })
        ));
    }
}
