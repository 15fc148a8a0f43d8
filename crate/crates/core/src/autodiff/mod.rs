//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only list of nodes; every operation on a [`Var`]
//! pushes one node holding its value and, when some input requires a
//! gradient, the operation kind and input ids. Backward rules are themselves
//! written in terms of graph operations, so on a [`Order::Second`] graph the
//! gradient returned by [`Graph::input_gradient`] is an ordinary differentiable
//! node and scalar functions of it can be passed to [`Graph::backward`]. This
//! is what the gradient penalty needs.
//!
//! Piecewise-linear activations contribute their derivative masks as
//! constants; their second derivative is zero almost everywhere. Convolution,
//! batch normalization, max pooling and the fused softmax cross entropy have
//! first-order backward rules only and raise [`Error::Capability`] when a
//! second-order gradient would have to pass through them.

pub mod layers;
mod nn;
mod ops;

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use nn::BatchStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul { ta: bool, tb: bool },
    Add,
    Sub,
    Mul,
    Scale(f32),
    AddScalar,
    Square,
    Sqrt,
    Recip,
    Ln,
    Tanh,
    Sigmoid,
    /// Elementwise product with a fixed tensor (dropout masks, activation slopes).
    MulConst(Rc<Tensor>),
    LeakyRelu(f32),
    SumAll,
    ExpandAll,
    SumAxis(usize),
    ExpandAxis { axis: usize },
    Reshape,
    ConcatCols,
    SliceCols { start: usize },
    PadCols { start: usize },
    Gather(Rc<Vec<usize>>),
    ScatterRows(Rc<Vec<usize>>),
    Conv2d { stride: usize, padding: usize },
    BatchNorm(Rc<nn::BnSaved>),
    MaxPool2d { size: usize, stride: usize },
    SoftmaxCe(Rc<Vec<usize>>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Ln => "ln",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::MulConst(_) => "mul_const",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::SumAll => "sum",
            Op::ExpandAll => "expand",
            Op::SumAxis(_) => "sum_axis",
            Op::ExpandAxis { .. } => "expand_axis",
            Op::Reshape => "reshape",
            Op::ConcatCols => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::Gather(_) => "gather_rows",
            Op::ScatterRows(_) => "scatter_rows",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNorm(_) => "batch_norm",
            Op::MaxPool2d { .. } => "max_pool2d",
            Op::SoftmaxCe(_) => "softmax_cross_entropy",
        }
    }

    fn first_order_only(&self) -> bool {
        matches!(
            self,
            Op::Conv2d { .. } | Op::BatchNorm(_) | Op::MaxPool2d { .. } | Op::SoftmaxCe(_)
        )
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    inputs: Vec<usize>,
    requires_grad: bool,
}

pub struct Graph {
    order: Order,
    nodes: RefCell<Vec<Node>>,
    recording: Cell<bool>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

impl Graph {
    pub fn new(order: Order) -> Self {
        Graph {
            order,
            nodes: RefCell::new(Vec::new()),
            recording: Cell::new(true),
        }
    }

    pub fn first_order() -> Self {
        Self::new(Order::First)
    }

    pub fn second_order() -> Self {
        Self::new(Order::Second)
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn input(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.leaf(value, requires_grad)
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            inputs: Vec::new(),
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad =
            self.recording.get() && inputs.iter().any(|&i| nodes[i].requires_grad);
        let node = if requires_grad {
            Node {
                value: Rc::new(value),
                op,
                inputs: inputs.to_vec(),
                requires_grad,
            }
        } else {
            Node {
                value: Rc::new(value),
                op: Op::Leaf,
                inputs: Vec::new(),
                requires_grad,
            }
        };
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { graph: self, id }
    }

    /// Gradients of a scalar `loss` with respect to each of `params`, as plain tensors.
    ///
    /// Parameters the loss does not depend on get zero gradients.
    pub fn backward(&self, loss: Var<'_>, params: &[Var<'_>]) -> Result<Vec<Tensor>> {
        let grads = self.grad(loss, params, false)?;
        Ok(grads.iter().map(|g| (*g.value()).clone()).collect())
    }

    /// `∂out/∂wrt` as a differentiable node. Requires a second-order graph.
    pub fn input_gradient<'g>(&'g self, out: Var<'g>, wrt: Var<'g>) -> Result<Var<'g>> {
        if self.order != Order::Second {
            return Err(Error::Capability(
                "input_gradient needs a graph built with Order::Second".into(),
            ));
        }
        Ok(self.grad(out, &[wrt], true)?.remove(0))
    }

    /// Reverse sweep from a scalar `out`.
    ///
    /// With `create_graph` the backward computation is recorded so that the
    /// returned gradients can be differentiated again.
    pub fn grad<'g>(
        &'g self,
        out: Var<'g>,
        wrt: &[Var<'g>],
        create_graph: bool,
    ) -> Result<Vec<Var<'g>>> {
        if out.len() != 1 {
            return Err(Error::contract(format!(
                "gradient of a non-scalar of shape {:?}",
                out.shape()
            )));
        }
        if create_graph && self.order != Order::Second {
            return Err(Error::Capability(
                "create_graph on a first-order graph".into(),
            ));
        }
        let n = out.id + 1;
        let reach = {
            let nodes = self.nodes.borrow();
            let mut reach = vec![false; n];
            for w in wrt {
                if w.id < n && nodes[w.id].requires_grad {
                    reach[w.id] = true;
                }
            }
            for i in 0..n {
                if !reach[i] && nodes[i].inputs.iter().any(|&j| reach[j]) {
                    reach[i] = true;
                }
            }
            reach
        };

        let saved = self.recording.replace(create_graph);
        let result = self.sweep(out, &reach, create_graph);
        self.recording.set(saved);
        let grads = result?;

        Ok(wrt
            .iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(id) => self.var(id),
                None => self.constant(Tensor::zeros(w.shape().as_slice())),
            })
            .collect())
    }

    fn sweep(&self, out: Var<'_>, reach: &[bool], create_graph: bool) -> Result<Vec<Option<usize>>> {
        let n = out.id + 1;
        let mut grads: Vec<Option<usize>> = vec![None; n];
        if !reach[out.id] {
            return Ok(grads);
        }
        grads[out.id] = Some(self.constant(Tensor::ones(&out.shape())).id);
        for id in (0..n).rev() {
            let Some(g) = grads[id] else { continue };
            if !reach[id] {
                continue;
            }
            let (op, inputs) = {
                let nodes = self.nodes.borrow();
                let node = &nodes[id];
                if node.inputs.is_empty() {
                    continue;
                }
                (node.op.clone(), node.inputs.clone())
            };
            let need: Vec<bool> = inputs.iter().map(|&i| reach[i]).collect();
            if !need.iter().any(|&b| b) {
                continue;
            }
            if create_graph && op.first_order_only() {
                return Err(Error::Capability(format!(
                    "{} has no second-order backward rule",
                    op.name()
                )));
            }
            let contribs = ops::backward_rule(self, &op, &inputs, id, self.var(g), &need)?;
            for ((&inp, c), &needed) in inputs.iter().zip(contribs).zip(&need) {
                let Some(c) = c else { continue };
                if !needed {
                    continue;
                }
                grads[inp] = Some(match grads[inp] {
                    Some(prev) => self.var(prev).add(c)?.id,
                    None => c.id,
                });
            }
        }
        Ok(grads)
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    /// Borrow of the value; do not hold it across operations on the same graph.
    pub fn value_ref(&self) -> Ref<'g, Tensor> {
        Ref::map(self.graph.nodes.borrow(), |n| &*n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value_ref().shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.value_ref().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Scalar value; panics on non-scalars.
    pub fn item(&self) -> f32 {
        self.value_ref().item()
    }
}

/// Elementwise operation selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Square,
}

pub fn elementwise<'g>(op: Elementwise, a: Var<'g>, b: Option<Var<'g>>) -> Result<Var<'g>> {
    let need_b = || b.ok_or_else(|| Error::contract(format!("{op:?} takes two operands")));
    match op {
        Elementwise::Add => a.add(need_b()?),
        Elementwise::Sub => a.sub(need_b()?),
        Elementwise::Mul => a.mul(need_b()?),
        Elementwise::Square => Ok(a.square()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

pub fn reduce(op: Reduce, t: Var<'_>, axis: Option<usize>) -> Result<Var<'_>> {
    match (op, axis) {
        (Reduce::Sum, None) => Ok(t.sum()),
        (Reduce::Mean, None) => Ok(t.mean()),
        (Reduce::Sum, Some(ax)) => t.sum_axis(ax),
        (Reduce::Mean, Some(ax)) => t.mean_axis(ax),
    }
}
