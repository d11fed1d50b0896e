//! Reverse-mode differentiation over a recorded sequence of operators.
//!
//! A tape may read from several parameter vectors at once (translator,
//! reverse translator, discriminators), so gradients come back per model.

use super::ops;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Location of a 3×3 convolution's weights inside a parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvRef {
    pub model: usize,
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormRef {
    pub model: usize,
    pub gamma: usize,
    pub beta: usize,
    pub channels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseRef {
    pub model: usize,
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Conv(NodeId, ConvRef),
    Norm(NodeId, NormRef, Tensor, Vec<f64>),
    Leaky(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Affine(NodeId, f64),
    Upsample(NodeId),
    Concat(NodeId, NodeId),
    Mean(NodeId),
    Dense(NodeId, DenseRef),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv(..) => "conv",
            Op::Norm(..) => "norm",
            Op::Leaky(..) => "leaky",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Affine(..) => "affine",
            Op::Upsample(..) => "upsample",
            Op::Concat(..) => "concat",
            Op::Mean(..) => "mean",
            Op::Dense(..) => "dense",
        }
    }
}

pub struct Tape<'a> {
    params: Vec<&'a [f64]>,
    ops: Vec<Op>,
    values: Vec<Tensor>,
}

/// Gradients from one backward pass.
pub struct Grads {
    /// One buffer per parameter vector, aligned with it.
    pub params: Vec<Vec<f64>>,
    nodes: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient reaching an input node, if any flowed there.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id].as_ref()
    }
}

impl<'a> Tape<'a> {
    pub fn new(params: Vec<&'a [f64]>) -> Self {
        Self {
            params,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.values.len() - 1
    }

    fn mismatch(&self, op: &str, message: String) -> Error {
        Error::contract("nets", format!("{op} node {}: {message}", self.ops.len()))
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t)
    }

    pub fn conv(&mut self, x: NodeId, r: ConvRef) -> Result<NodeId> {
        let xv = &self.values[x];
        if xv.channels != r.cin {
            return Err(self.mismatch("conv", format!("expects {} channels, got {}", r.cin, xv.channels)));
        }
        let p = self.params[r.model];
        let w = &p[r.weight..r.weight + r.cout * r.cin * 9];
        let b = &p[r.bias..r.bias + r.cout];
        let y = ops::conv3x3(xv, w, b, r.cout, r.stride);
        Ok(self.push(Op::Conv(x, r), y))
    }

    pub fn norm(&mut self, x: NodeId, r: NormRef) -> Result<NodeId> {
        let xv = &self.values[x];
        if xv.channels != r.channels {
            return Err(self.mismatch("norm", format!("expects {} channels, got {}", r.channels, xv.channels)));
        }
        let p = self.params[r.model];
        let (y, xhat, inv) = ops::instance_norm(xv, &p[r.gamma..r.gamma + r.channels], &p[r.beta..r.beta + r.channels]);
        Ok(self.push(Op::Norm(x, r, xhat, inv), y))
    }

    /// Leaky rectifier; slope 0 is the plain rectifier.
    pub fn leaky(&mut self, x: NodeId, slope: f64) -> NodeId {
        let mut y = self.values[x].clone();
        for v in &mut y.data {
            if *v < 0.0 {
                *v *= slope;
            }
        }
        self.push(Op::Leaky(x, slope), y)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.leaky(x, 0.0)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let mut y = self.values[x].clone();
        y.data.iter_mut().for_each(|v| *v = ops::sigmoid(*v));
        self.push(Op::Sigmoid(x), y)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let mut y = self.values[x].clone();
        y.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(Op::Tanh(x), y)
    }

    /// `a·x + b`, elementwise.
    pub fn affine(&mut self, x: NodeId, a: f64, b: f64) -> NodeId {
        let mut y = self.values[x].clone();
        y.data.iter_mut().for_each(|v| *v = a * *v + b);
        self.push(Op::Affine(x, a), y)
    }

    pub fn upsample(&mut self, x: NodeId) -> NodeId {
        let y = ops::upsample2(&self.values[x]);
        self.push(Op::Upsample(x), y)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.values[a], &self.values[b]);
        if (av.height, av.width) != (bv.height, bv.width) {
            return Err(self.mismatch(
                "concat",
                format!("{}x{} vs {}x{}", av.height, av.width, bv.height, bv.width),
            ));
        }
        let y = ops::concat(av, bv);
        Ok(self.push(Op::Concat(a, b), y))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let y = ops::global_mean(&self.values[x]);
        self.push(Op::Mean(x), y)
    }

    pub fn dense(&mut self, x: NodeId, r: DenseRef) -> Result<NodeId> {
        let xv = &self.values[x];
        if xv.data.len() != r.inputs {
            return Err(self.mismatch("dense", format!("expects {} inputs, got {}", r.inputs, xv.data.len())));
        }
        let p = self.params[r.model];
        let y = ops::dense(
            xv,
            &p[r.weight..r.weight + r.inputs * r.outputs],
            &p[r.bias..r.bias + r.outputs],
            r.outputs,
        );
        Ok(self.push(Op::Dense(x, r), y))
    }

    /// Back-propagates the given output gradients through the whole tape.
    pub fn backward(&self, seeds: Vec<(NodeId, Tensor)>) -> Result<Grads> {
        let mut nodes: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        for (id, g) in seeds {
            if g.shape() != self.values[id].shape() {
                return Err(Error::contract(
                    "nets",
                    format!(
                        "{} node {id}: gradient shape {:?} vs value {:?}",
                        self.ops[id].name(),
                        g.shape(),
                        self.values[id].shape()
                    ),
                ));
            }
            match &mut nodes[id] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        let mut params: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();

        for id in (0..self.ops.len()).rev() {
            if matches!(self.ops[id], Op::Input) {
                continue;
            }
            let Some(gy) = nodes[id].take() else { continue };
            let y = &self.values[id];
            match &self.ops[id] {
                Op::Input => unreachable!(),
                Op::Conv(x, r) => {
                    let p = self.params[r.model];
                    let nw = r.cout * r.cin * 9;
                    let mut gx = zeros_like(&self.values[*x]);
                    let gp = &mut params[r.model];
                    let (gw, rest) = split_two(gp, r.weight, nw, r.bias, r.cout);
                    ops::conv3x3_backward(
                        &self.values[*x],
                        &p[r.weight..r.weight + nw],
                        &gy,
                        r.stride,
                        &mut gx,
                        gw,
                        rest,
                    );
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Norm(x, r, xhat, inv) => {
                    let p = self.params[r.model];
                    let mut gx = zeros_like(&self.values[*x]);
                    let gp = &mut params[r.model];
                    let (gg, gb) = split_two(gp, r.gamma, r.channels, r.beta, r.channels);
                    ops::instance_norm_backward(xhat, inv, &p[r.gamma..r.gamma + r.channels], &gy, &mut gx, gg, gb);
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Leaky(x, slope) => {
                    let xv = &self.values[*x];
                    let mut gx = gy;
                    for (g, &v) in gx.data.iter_mut().zip(&xv.data) {
                        if v < 0.0 {
                            *g *= slope;
                        }
                    }
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = gy;
                    for (g, &s) in gx.data.iter_mut().zip(&y.data) {
                        *g *= s * (1.0 - s);
                    }
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = gy;
                    for (g, &t) in gx.data.iter_mut().zip(&y.data) {
                        *g *= 1.0 - t * t;
                    }
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Affine(x, a) => {
                    let mut gx = gy;
                    gx.data.iter_mut().for_each(|g| *g *= a);
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Upsample(x) => {
                    let mut gx = zeros_like(&self.values[*x]);
                    ops::upsample2_backward(&gy, &mut gx);
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Concat(a, b) => {
                    let na = self.values[*a].data.len();
                    let ga = Tensor {
                        data: gy.data[..na].to_vec(),
                        ..zeros_shape(&self.values[*a])
                    };
                    let gb = Tensor {
                        data: gy.data[na..].to_vec(),
                        ..zeros_shape(&self.values[*b])
                    };
                    accumulate(&mut nodes, *a, ga);
                    accumulate(&mut nodes, *b, gb);
                }
                Op::Mean(x) => {
                    let xv = &self.values[*x];
                    let n = xv.plane_len() as f64;
                    let mut gx = zeros_like(xv);
                    for c in 0..xv.channels {
                        let g = gy.data[c] / n;
                        gx.plane_mut(c).iter_mut().for_each(|v| *v = g);
                    }
                    accumulate(&mut nodes, *x, gx);
                }
                Op::Dense(x, r) => {
                    let p = self.params[r.model];
                    let nw = r.inputs * r.outputs;
                    let mut gx = zeros_like(&self.values[*x]);
                    let gp = &mut params[r.model];
                    let (gw, gb) = split_two(gp, r.weight, nw, r.bias, r.outputs);
                    ops::dense_backward(&self.values[*x], &p[r.weight..r.weight + nw], &gy, &mut gx, gw, gb);
                    accumulate(&mut nodes, *x, gx);
                }
            }
        }
        Ok(Grads { params, nodes })
    }
}

fn zeros_like(t: &Tensor) -> Tensor {
    Tensor::zeros(t.channels, t.height, t.width)
}

fn zeros_shape(t: &Tensor) -> Tensor {
    Tensor {
        channels: t.channels,
        height: t.height,
        width: t.width,
        data: Vec::new(),
    }
}

fn accumulate(nodes: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut nodes[id] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Two disjoint mutable windows of one buffer.
fn split_two(buf: &mut [f64], a: usize, na: usize, b: usize, nb: usize) -> (&mut [f64], &mut [f64]) {
    assert!(a + na <= b || b + nb <= a, "parameter windows overlap");
    if a < b {
        let (lo, hi) = buf.split_at_mut(b);
        (&mut lo[a..a + na], &mut hi[..nb])
    } else {
        let (lo, hi) = buf.split_at_mut(a);
        (&mut hi[..na], &mut lo[b..b + nb])
    }
}
