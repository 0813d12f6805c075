//! Dense float tensors with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation; [`Tape::backward`] walks the record
//! once in reverse, producing exact analytic gradients. The layer set is
//! what the neural renderer needs: convolutions (1x1 and 3x3, stride 1,
//! zero padding), dense layers, leaky ReLU, 2x2 max pooling, nearest 2x
//! upsampling, channel concatenation, and the elementwise/reduction glue
//! the losses are built from. Forward math lives in eager functions shared
//! with the no-grad inference path.

pub mod alloc;
mod adam;
mod kernels;
mod loss;

pub use adam::{AdamError, AdamHyper, AdamState};
pub use loss::{combined_loss, dssim, gaussian_kernel_1d, l1_loss, ssim};

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported shape {shape:?} ({reason})")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    #[error("backward target must be a scalar, got {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

/// Dense row-major float tensor. Buffer sizes are registered with the
/// per-thread allocation counter for the memory-law measurements.
#[derive(Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        alloc::track_alloc(n * 4);
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(value: f32) -> Self {
        Self::from_vec(&[1], vec![value])
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape/data length mismatch");
        alloc::track_alloc(data.len() * 4);
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// He-uniform initialization: U(-sqrt(6/fan_in), +sqrt(6/fan_in)) from a
    /// deterministic per-layer seed.
    pub fn he_uniform(shape: &[usize], fan_in: usize, seed: u64) -> Self {
        let limit = (6.0 / fan_in.max(1) as f32).sqrt();
        let mut rng = SplitMix64::new(seed);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform_f32(-limit, limit)).collect();
        Self::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bytes of the underlying buffer.
    pub fn byte_size(&self) -> usize {
        self.data.len() * 4
    }
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        alloc::track_alloc(self.data.len() * 4);
        Self {
            shape: self.shape.clone(),
            data: self.data.clone(),
        }
    }
}

impl Drop for Tensor {
    fn drop(&mut self) {
        alloc::track_free(self.data.len() * 4);
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Affine { x: usize, scale: f32 },
    Conv2d { x: usize, w: usize, b: usize, k: usize },
    Dense { x: usize, w: usize, b: usize },
    LeakyRelu { x: usize, slope: f32 },
    Softplus(usize),
    Abs(usize),
    Clamp01(usize),
    MaxPool2 { x: usize, argmax: Vec<u32> },
    Upsample2(usize),
    ConcatC(usize, usize),
    SumReduce(usize),
    DepthwiseFixed { x: usize, kernel: Rc<Vec<f32>> },
    CropBorder { x: usize, border: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Affine { .. } => "affine",
            Op::Conv2d { .. } => "conv2d",
            Op::Dense { .. } => "dense",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Softplus(..) => "softplus",
            Op::Abs(..) => "abs",
            Op::Clamp01(..) => "clamp01",
            Op::MaxPool2 { .. } => "max_pool2",
            Op::Upsample2(..) => "nearest_upsample2",
            Op::ConcatC(..) => "concat",
            Op::SumReduce(..) => "sum_reduce",
            Op::DepthwiseFixed { .. } => "depthwise_fixed",
            Op::CropBorder { .. } => "crop_border",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
}

/// Single-threaded operation record. Batch parallelism runs one tape per
/// shard and merges parameter gradients by ordered summation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    check_finite: Cell<bool>,
}

type OpResult = Result<Var, AutodiffError>;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// When enabled, every op asserts its output is finite and panics with
    /// the op name otherwise.
    pub fn set_check_finite(&self, on: bool) {
        self.check_finite.set(on);
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape.clone()
    }

    pub fn value_of(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    /// Accumulated gradient of `v` after [`Tape::backward`].
    pub fn grad_of(&self, v: Var) -> Option<Tensor> {
        self.nodes.borrow()[v.0].grad.clone()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        if self.check_finite.get() && !value.all_finite() {
            panic!("non-finite value produced by {}", op.name());
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            grad: None,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn requires(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    fn binary_same_shape(
        &self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(&Tensor, &Tensor) -> Tensor,
        op: impl Fn(usize, usize) -> Op,
    ) -> OpResult {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape != tb.shape {
                return Err(AutodiffError::ShapeMismatch {
                    op: op_name,
                    lhs: ta.shape.clone(),
                    rhs: tb.shape.clone(),
                });
            }
            f(ta, tb)
        };
        Ok(self.push(op(a.0, b.0), value, self.requires(&[a, b])))
    }

    pub fn add(&self, a: Var, b: Var) -> OpResult {
        self.binary_same_shape("add", a, b, |x, y| eager::zip(x, y, |a, b| a + b), Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> OpResult {
        self.binary_same_shape("sub", a, b, |x, y| eager::zip(x, y, |a, b| a - b), Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> OpResult {
        self.binary_same_shape("mul", a, b, |x, y| eager::zip(x, y, |a, b| a * b), Op::Mul)
    }

    pub fn div(&self, a: Var, b: Var) -> OpResult {
        self.binary_same_shape("div", a, b, |x, y| eager::zip(x, y, |a, b| a / b), Op::Div)
    }

    /// scale * x + shift, elementwise.
    pub fn affine(&self, x: Var, scale: f32, shift: f32) -> OpResult {
        let value = self.with_value(x, |t| eager::map(t, |v| scale * v + shift));
        Ok(self.push(Op::Affine { x: x.0, scale }, value, self.requires(&[x])))
    }

    pub fn scalar_mul(&self, x: Var, scale: f32) -> OpResult {
        self.affine(x, scale, 0.0)
    }

    /// 2D convolution over a CHW image: weight [co, ci, k, k], bias [co],
    /// stride 1, zero padding preserving the spatial size. k must be odd.
    pub fn conv2d(&self, x: Var, w: Var, b: Var) -> OpResult {
        let (value, k) = {
            let nodes = self.nodes.borrow();
            let (tx, tw, tb) = (&nodes[x.0].value, &nodes[w.0].value, &nodes[b.0].value);
            if tx.shape.len() != 3 {
                return Err(AutodiffError::BadShape {
                    op: "conv2d",
                    shape: tx.shape.clone(),
                    reason: "input must be CHW",
                });
            }
            if tw.shape.len() != 4 || tw.shape[2] != tw.shape[3] || tw.shape[2] % 2 == 0 {
                return Err(AutodiffError::BadShape {
                    op: "conv2d",
                    shape: tw.shape.clone(),
                    reason: "weight must be [co, ci, k, k] with odd square k",
                });
            }
            let k = tw.shape[2];
            if tw.shape[1] != tx.shape[0] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "conv2d",
                    lhs: tx.shape.clone(),
                    rhs: tw.shape.clone(),
                });
            }
            if tb.shape != [tw.shape[0]] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "conv2d",
                    lhs: tw.shape.clone(),
                    rhs: tb.shape.clone(),
                });
            }
            (eager::conv2d(tx, tw, tb), k)
        };
        Ok(self.push(
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.0,
                k,
            },
            value,
            self.requires(&[x, w, b]),
        ))
    }

    /// Fully connected layer: x [n, i] * w [i, o] + b [o].
    pub fn dense(&self, x: Var, w: Var, b: Var) -> OpResult {
        let value = {
            let nodes = self.nodes.borrow();
            let (tx, tw, tb) = (&nodes[x.0].value, &nodes[w.0].value, &nodes[b.0].value);
            if tx.shape.len() != 2 || tw.shape.len() != 2 || tx.shape[1] != tw.shape[0] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "dense",
                    lhs: tx.shape.clone(),
                    rhs: tw.shape.clone(),
                });
            }
            if tb.shape != [tw.shape[1]] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "dense",
                    lhs: tw.shape.clone(),
                    rhs: tb.shape.clone(),
                });
            }
            eager::dense(tx, tw, tb)
        };
        Ok(self.push(
            Op::Dense {
                x: x.0,
                w: w.0,
                b: b.0,
            },
            value,
            self.requires(&[x, w, b]),
        ))
    }

    pub fn leaky_relu(&self, x: Var, slope: f32) -> OpResult {
        let value = self.with_value(x, |t| eager::leaky_relu(t, slope));
        Ok(self.push(Op::LeakyRelu { x: x.0, slope }, value, self.requires(&[x])))
    }

    pub fn softplus(&self, x: Var) -> OpResult {
        let value = self.with_value(x, eager::softplus);
        Ok(self.push(Op::Softplus(x.0), value, self.requires(&[x])))
    }

    pub fn abs(&self, x: Var) -> OpResult {
        let value = self.with_value(x, |t| eager::map(t, f32::abs));
        Ok(self.push(Op::Abs(x.0), value, self.requires(&[x])))
    }

    pub fn clamp01(&self, x: Var) -> OpResult {
        let value = self.with_value(x, |t| eager::map(t, |v| v.clamp(0.0, 1.0)));
        Ok(self.push(Op::Clamp01(x.0), value, self.requires(&[x])))
    }

    /// 2x2 max pooling of a CHW image with even spatial dims.
    pub fn max_pool2(&self, x: Var) -> OpResult {
        let (value, argmax) = {
            let nodes = self.nodes.borrow();
            let tx = &nodes[x.0].value;
            if tx.shape.len() != 3 || tx.shape[1] % 2 != 0 || tx.shape[2] % 2 != 0 {
                return Err(AutodiffError::BadShape {
                    op: "max_pool2",
                    shape: tx.shape.clone(),
                    reason: "input must be CHW with even spatial dims",
                });
            }
            eager::max_pool2(tx)
        };
        Ok(self.push(Op::MaxPool2 { x: x.0, argmax }, value, self.requires(&[x])))
    }

    /// Nearest-neighbor 2x upsampling of a CHW image.
    pub fn upsample2(&self, x: Var) -> OpResult {
        let value = {
            let nodes = self.nodes.borrow();
            let tx = &nodes[x.0].value;
            if tx.shape.len() != 3 {
                return Err(AutodiffError::BadShape {
                    op: "nearest_upsample2",
                    shape: tx.shape.clone(),
                    reason: "input must be CHW",
                });
            }
            eager::upsample2(tx)
        };
        Ok(self.push(Op::Upsample2(x.0), value, self.requires(&[x])))
    }

    /// Channel-axis concatenation of two CHW images.
    pub fn concat_c(&self, a: Var, b: Var) -> OpResult {
        let value = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape.len() != 3 || tb.shape.len() != 3 || ta.shape[1..] != tb.shape[1..] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: ta.shape.clone(),
                    rhs: tb.shape.clone(),
                });
            }
            eager::concat_c(ta, tb)
        };
        Ok(self.push(Op::ConcatC(a.0, b.0), value, self.requires(&[a, b])))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_reduce(&self, x: Var) -> OpResult {
        let value = self.with_value(x, |t| {
            Tensor::scalar(t.data.iter().map(|&v| v as f64).sum::<f64>() as f32)
        });
        Ok(self.push(Op::SumReduce(x.0), value, self.requires(&[x])))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&self, x: Var) -> OpResult {
        let n = self.with_value(x, Tensor::len).max(1);
        let s = self.sum_reduce(x)?;
        self.affine(s, 1.0 / n as f32, 0.0)
    }

    /// Depthwise separable convolution with a fixed (non-learnable) odd 1D
    /// kernel applied horizontally then vertically, zero padded.
    pub fn depthwise_fixed(&self, x: Var, kernel: Rc<Vec<f32>>) -> OpResult {
        let value = {
            let nodes = self.nodes.borrow();
            let tx = &nodes[x.0].value;
            if tx.shape.len() != 3 {
                return Err(AutodiffError::BadShape {
                    op: "depthwise_fixed",
                    shape: tx.shape.clone(),
                    reason: "input must be CHW",
                });
            }
            eager::depthwise_fixed(tx, &kernel)
        };
        Ok(self.push(
            Op::DepthwiseFixed { x: x.0, kernel },
            value,
            self.requires(&[x]),
        ))
    }

    /// Remove a border of `border` pixels from a CHW image.
    pub fn crop_border(&self, x: Var, border: usize) -> OpResult {
        let value = {
            let nodes = self.nodes.borrow();
            let tx = &nodes[x.0].value;
            if tx.shape.len() != 3 || tx.shape[1] <= 2 * border || tx.shape[2] <= 2 * border {
                return Err(AutodiffError::BadShape {
                    op: "crop_border",
                    shape: tx.shape.clone(),
                    reason: "spatial extent too small for the crop",
                });
            }
            eager::crop_border(tx, border)
        };
        Ok(self.push(
            Op::CropBorder { x: x.0, border },
            value,
            self.requires(&[x]),
        ))
    }

    /// Reverse sweep from a scalar loss; gradients accumulate into every
    /// reachable node that requires them, visiting each node exactly once.
    pub fn backward(&self, loss: Var) -> Result<(), AutodiffError> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes[loss.0].value.shape != [1] {
            return Err(AutodiffError::NotScalar(nodes[loss.0].value.shape.clone()));
        }
        if !nodes[loss.0].requires_grad {
            return Ok(());
        }
        accum_into(&mut nodes[loss.0], &[1.0]);

        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad || nodes[i].grad.is_none() {
                continue;
            }
            let grad = nodes[i].grad.take().expect("grad present");
            let (before, rest) = nodes.split_at_mut(i);
            let node = &mut rest[0];
            backward_step(node, &grad, before);
            // Gradients are retained on leaves only; dropping interior
            // grads keeps repeated backward calls additive.
            if matches!(node.op, Op::Leaf) {
                node.grad = Some(grad);
            }
        }
        Ok(())
    }
}

fn accum_into(node: &mut Node, delta: &[f32]) {
    let grad = node
        .grad
        .get_or_insert_with(|| Tensor::zeros(&node.value.shape));
    for (g, d) in grad.data.iter_mut().zip(delta) {
        *g += d;
    }
}

fn accum(before: &mut [Node], idx: usize, delta: &[f32]) {
    if before[idx].requires_grad {
        accum_into(&mut before[idx], delta);
    }
}

fn backward_step(node: &mut Node, grad: &Tensor, before: &mut [Node]) {
    let g = &grad.data;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accum(before, *a, g);
            accum(before, *b, g);
        }
        Op::Sub(a, b) => {
            accum(before, *a, g);
            if before[*b].requires_grad {
                let neg: Vec<f32> = g.iter().map(|v| -v).collect();
                accum(before, *b, &neg);
            }
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            if before[a].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[b].value.data)
                    .map(|(g, b)| g * b)
                    .collect();
                accum(before, a, &d);
            }
            if before[b].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[a].value.data)
                    .map(|(g, a)| g * a)
                    .collect();
                accum(before, b, &d);
            }
        }
        Op::Div(a, b) => {
            let (a, b) = (*a, *b);
            if before[a].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[b].value.data)
                    .map(|(g, b)| g / b)
                    .collect();
                accum(before, a, &d);
            }
            if before[b].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&node.value.data)
                    .zip(&before[b].value.data)
                    .map(|((g, out), b)| -g * out / b)
                    .collect();
                accum(before, b, &d);
            }
        }
        Op::Affine { x, scale } => {
            if before[*x].requires_grad {
                let d: Vec<f32> = g.iter().map(|v| v * scale).collect();
                accum(before, *x, &d);
            }
        }
        Op::Conv2d { x, w, b, k } => {
            eager::conv2d_backward(grad, *k, before, *x, *w, *b);
        }
        Op::Dense { x, w, b } => {
            eager::dense_backward(grad, before, *x, *w, *b);
        }
        Op::LeakyRelu { x, slope } => {
            if before[*x].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[*x].value.data)
                    .map(|(g, x)| if *x >= 0.0 { *g } else { g * slope })
                    .collect();
                accum(before, *x, &d);
            }
        }
        Op::Softplus(x) => {
            if before[*x].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[*x].value.data)
                    .map(|(g, x)| g * eager::sigmoid(*x))
                    .collect();
                accum(before, *x, &d);
            }
        }
        Op::Abs(x) => {
            if before[*x].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[*x].value.data)
                    .map(|(g, x)| {
                        if *x > 0.0 {
                            *g
                        } else if *x < 0.0 {
                            -*g
                        } else {
                            // Subgradient zero at exact ties.
                            0.0
                        }
                    })
                    .collect();
                accum(before, *x, &d);
            }
        }
        Op::Clamp01(x) => {
            if before[*x].requires_grad {
                let d: Vec<f32> = g
                    .iter()
                    .zip(&before[*x].value.data)
                    .map(|(g, x)| if *x > 0.0 && *x < 1.0 { *g } else { 0.0 })
                    .collect();
                accum(before, *x, &d);
            }
        }
        Op::MaxPool2 { x, argmax } => {
            if before[*x].requires_grad {
                let mut d = vec![0.0f32; before[*x].value.len()];
                for (gv, &ai) in g.iter().zip(argmax) {
                    d[ai as usize] += gv;
                }
                accum(before, *x, &d);
            }
        }
        Op::Upsample2(x) => {
            if before[*x].requires_grad {
                let shape = before[*x].value.shape.clone();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let mut d = vec![0.0f32; c * h * w];
                kernels::upsample2_backward(g, c, h, w, &mut d);
                accum(before, *x, &d);
            }
        }
        Op::ConcatC(a, b) => {
            let (a, b) = (*a, *b);
            let na = before[a].value.len();
            accum(before, a, &g[..na]);
            accum(before, b, &g[na..]);
        }
        Op::SumReduce(x) => {
            if before[*x].requires_grad {
                let d = vec![g[0]; before[*x].value.len()];
                accum(before, *x, &d);
            }
        }
        Op::DepthwiseFixed { x, kernel } => {
            if before[*x].requires_grad {
                // The transpose of a separable blur is the blur with the
                // reversed kernel.
                let shape = before[*x].value.shape.clone();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let flipped: Vec<f32> = kernel.iter().rev().copied().collect();
                let mut tmp = vec![0.0f32; c * h * w];
                let mut d = vec![0.0f32; c * h * w];
                kernels::depthwise_separable(g, c, h, w, &flipped, &mut tmp, &mut d);
                accum(before, *x, &d);
            }
        }
        Op::CropBorder { x, border } => {
            if before[*x].requires_grad {
                let shape = before[*x].value.shape.clone();
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (ch, cw) = (h - 2 * border, w - 2 * border);
                let mut d = vec![0.0f32; c * h * w];
                for cc in 0..c {
                    for y in 0..ch {
                        let src = (cc * ch + y) * cw;
                        let dst = (cc * h + y + border) * w + border;
                        d[dst..dst + cw].copy_from_slice(&g[src..src + cw]);
                    }
                }
                accum(before, *x, &d);
            }
        }
    }
}

/// Eager (tape-free) forward math shared by the tape and the streaming
/// inference path.
pub mod eager {
    use super::{kernels, Node, Tensor};

    pub(super) fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
        let mut out = Tensor::zeros(&a.shape);
        for ((o, x), y) in out.data.iter_mut().zip(&a.data).zip(&b.data) {
            *o = f(*x, *y);
        }
        out
    }

    pub(super) fn map(a: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
        let mut out = Tensor::zeros(&a.shape);
        for (o, x) in out.data.iter_mut().zip(&a.data) {
            *o = f(*x);
        }
        out
    }

    pub fn sigmoid(x: f32) -> f32 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
        map(x, |v| if v >= 0.0 { v } else { slope * v })
    }

    pub fn softplus(x: &Tensor) -> Tensor {
        map(x, |v| {
            if v > 20.0 {
                v
            } else if v < -20.0 {
                v.exp()
            } else {
                v.exp().ln_1p()
            }
        })
    }

    /// Stride-1 same-padding convolution via im2col and matmul.
    pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (ci, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
        let co = w.shape[0];
        let k = w.shape[2];
        let hw = h * wd;
        let mut out = Tensor::zeros(&[co, h, wd]);
        if k == 1 {
            // 1x1 kernels skip the unfold entirely.
            kernels::matmul(&w.data, &x.data, co, ci, hw, &mut out.data);
        } else {
            let mut cols = Tensor::zeros(&[ci * k * k, hw]);
            kernels::im2col(&x.data, ci, h, wd, k, &mut cols.data);
            kernels::matmul(&w.data, &cols.data, co, ci * k * k, hw, &mut out.data);
        }
        for (c, bias) in b.data.iter().enumerate() {
            if *bias != 0.0 {
                for v in &mut out.data[c * hw..(c + 1) * hw] {
                    *v += bias;
                }
            }
        }
        out
    }

    pub(super) fn conv2d_backward(
        grad: &Tensor,
        k: usize,
        before: &mut [Node],
        xi: usize,
        wi: usize,
        bi: usize,
    ) {
        let x_shape = before[xi].value.shape.clone();
        let (ci, h, wd) = (x_shape[0], x_shape[1], x_shape[2]);
        let co = before[wi].value.shape[0];
        let hw = h * wd;
        let ckk = ci * k * k;

        if before[bi].requires_grad {
            let mut db = vec![0.0f32; co];
            for c in 0..co {
                db[c] = grad.data[c * hw..(c + 1) * hw].iter().sum();
            }
            super::accum(before, bi, &db);
        }

        let cols = if k == 1 {
            None
        } else {
            let mut cols = vec![0.0f32; ckk * hw];
            kernels::im2col(&before[xi].value.data, ci, h, wd, k, &mut cols);
            Some(cols)
        };

        if before[wi].requires_grad {
            // dW[co, ckk] = dY[co, hw] * cols^T.
            let mut dw = vec![0.0f32; co * ckk];
            match &cols {
                Some(cols) => kernels::matmul_abt(&grad.data, cols, co, hw, ckk, &mut dw),
                None => {
                    kernels::matmul_abt(&grad.data, &before[xi].value.data, co, hw, ci, &mut dw)
                }
            }
            super::accum(before, wi, &dw);
        }

        if before[xi].requires_grad {
            // dcols[ckk, hw] = W^T * dY, folded back by col2im.
            let w_data = &before[wi].value.data;
            if k == 1 {
                let mut dx = vec![0.0f32; ci * hw];
                kernels::matmul_atb(w_data, &grad.data, ci, co, hw, &mut dx);
                super::accum(before, xi, &dx);
            } else {
                let mut dcols = vec![0.0f32; ckk * hw];
                kernels::matmul_atb(w_data, &grad.data, ckk, co, hw, &mut dcols);
                let mut dx = vec![0.0f32; ci * hw];
                kernels::col2im(&dcols, ci, h, wd, k, &mut dx);
                super::accum(before, xi, &dx);
            }
        }
    }

    pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (n, i) = (x.shape[0], x.shape[1]);
        let o = w.shape[1];
        let mut out = Tensor::zeros(&[n, o]);
        kernels::matmul(&x.data, &w.data, n, i, o, &mut out.data);
        for row in out.data.chunks_mut(o) {
            for (v, bias) in row.iter_mut().zip(&b.data) {
                *v += bias;
            }
        }
        out
    }

    pub(super) fn dense_backward(
        grad: &Tensor,
        before: &mut [Node],
        xi: usize,
        wi: usize,
        bi: usize,
    ) {
        let (n, i) = (before[xi].value.shape[0], before[xi].value.shape[1]);
        let o = before[wi].value.shape[1];
        if before[bi].requires_grad {
            let mut db = vec![0.0f32; o];
            for row in grad.data.chunks(o) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            super::accum(before, bi, &db);
        }
        if before[wi].requires_grad {
            // dW[i, o] = X^T * dY.
            let mut dw = vec![0.0f32; i * o];
            kernels::matmul_atb(&before[xi].value.data, &grad.data, i, n, o, &mut dw);
            super::accum(before, wi, &dw);
        }
        if before[xi].requires_grad {
            // dX[n, i] = dY * W^T.
            let mut dx = vec![0.0f32; n * i];
            kernels::matmul_abt(&grad.data, &before[wi].value.data, n, o, i, &mut dx);
            super::accum(before, xi, &dx);
        }
    }

    pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<u32>) {
        let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let mut out = Tensor::zeros(&[c, h / 2, w / 2]);
        let mut argmax = vec![0u32; out.len()];
        kernels::max_pool2(&x.data, c, h, w, &mut out.data, &mut argmax);
        (out, argmax)
    }

    pub fn upsample2(x: &Tensor) -> Tensor {
        let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let mut out = Tensor::zeros(&[c, h * 2, w * 2]);
        kernels::upsample2(&x.data, c, h, w, &mut out.data);
        out
    }

    pub fn concat_c(a: &Tensor, b: &Tensor) -> Tensor {
        let shape = [a.shape[0] + b.shape[0], a.shape[1], a.shape[2]];
        let mut out = Tensor::zeros(&shape);
        out.data[..a.len()].copy_from_slice(&a.data);
        out.data[a.len()..].copy_from_slice(&b.data);
        out
    }

    pub fn depthwise_fixed(x: &Tensor, kernel: &[f32]) -> Tensor {
        let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let mut tmp = Tensor::zeros(&x.shape);
        let mut out = Tensor::zeros(&x.shape);
        kernels::depthwise_separable(&x.data, c, h, w, kernel, &mut tmp.data, &mut out.data);
        out
    }

    pub fn crop_border(x: &Tensor, border: usize) -> Tensor {
        let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let (ch, cw) = (h - 2 * border, w - 2 * border);
        let mut out = Tensor::zeros(&[c, ch, cw]);
        for cc in 0..c {
            for y in 0..ch {
                let src = (cc * h + y + border) * w + border;
                let dst = (cc * ch + y) * cw;
                out.data[dst..dst + cw].copy_from_slice(&x.data[src..src + cw]);
            }
        }
        out
    }
}
