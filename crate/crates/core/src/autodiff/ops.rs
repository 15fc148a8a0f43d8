use std::rc::Rc;

use super::{nn, Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn without_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

impl<'g> Var<'g> {
    fn unary(self, op: Op, f: impl Fn(f32) -> f32) -> Var<'g> {
        let v = self.value_ref().map(f);
        self.graph.push(v, op, &[self.id])
    }

    fn same_graph(&self, other: &Var<'g>) {
        assert!(
            std::ptr::eq(self.graph, other.graph),
            "operands belong to different graphs"
        );
    }

    /// `other` broadcast to this shape along the leading dimension, if needed.
    fn broadcast_operand(self, other: Var<'g>) -> Result<Var<'g>> {
        let shape = self.shape();
        let oshape = other.shape();
        if shape == oshape {
            return Ok(other);
        }
        if shape.len() >= 2 {
            let tail = &shape[1..];
            let matches_tail = oshape == tail;
            let matches_row = oshape.len() == shape.len() && oshape[0] == 1 && &oshape[1..] == tail;
            if matches_tail || matches_row {
                return other.reshape(tail)?.expand_axis(0, &shape);
            }
        }
        Err(Error::dim(format!(
            "shapes {shape:?} and {oshape:?} do not broadcast"
        )))
    }

    fn binary(self, other: Var<'g>, op: Op, f: impl Fn(f32, f32) -> f32) -> Result<Var<'g>> {
        self.same_graph(&other);
        let other = self.broadcast_operand(other)?;
        let v = zip_map(&self.value_ref(), &other.value_ref(), f);
        Ok(self.graph.push(v, op, &[self.id, other.id]))
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, Op::Mul, |a, b| a * b)
    }

    pub fn scale(self, c: f32) -> Var<'g> {
        self.unary(Op::Scale(c), |x| x * c)
    }

    pub fn add_scalar(self, c: f32) -> Var<'g> {
        self.unary(Op::AddScalar, |x| x + c)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(Op::Square, |x| x * x)
    }

    pub fn sqrt(self) -> Var<'g> {
        self.unary(Op::Sqrt, f32::sqrt)
    }

    pub fn recip(self) -> Var<'g> {
        self.unary(Op::Recip, |x| 1.0 / x)
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(Op::Ln, f32::ln)
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(Op::Tanh, f32::tanh)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(Op::Sigmoid, |x| 1.0 / (1.0 + (-x).exp()))
    }

    /// `x` where `x >= 0`, `slope * x` elsewhere. The derivative at 0 is 1.
    pub fn leaky_relu(self, slope: f32) -> Var<'g> {
        self.unary(Op::LeakyRelu(slope), |x| if x >= 0.0 { x } else { slope * x })
    }

    pub fn relu(self) -> Var<'g> {
        self.leaky_relu(0.0)
    }

    /// Elementwise product with a tensor that is not part of the graph.
    pub fn mul_const(self, mask: Rc<Tensor>) -> Result<Var<'g>> {
        if self.value_ref().shape() != mask.shape() {
            return Err(Error::dim(format!(
                "mask {:?} does not match {:?}",
                mask.shape(),
                self.shape()
            )));
        }
        let v = zip_map(&self.value_ref(), &mask, |a, b| a * b);
        Ok(self.graph.push(v, Op::MulConst(mask), &[self.id]))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(self, lo: f32, hi: f32) -> Result<Var<'g>> {
        let mask = self
            .value_ref()
            .map(|x| if x >= lo && x <= hi { 1.0 } else { 0.0 });
        let clamped = self.value_ref().map(|x| x.clamp(lo, hi));
        // value differs from x * mask outside the interval, so push directly
        Ok(self
            .graph
            .push(clamped, Op::MulConst(Rc::new(mask)), &[self.id]))
    }

    pub fn sum(self) -> Var<'g> {
        let s = self.value_ref().sum() as f32;
        self.graph.push(Tensor::scalar(s), Op::SumAll, &[self.id])
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.len().max(1);
        self.sum().scale(1.0 / n as f32)
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::dim(format!(
                "axis {axis} out of range for shape {shape:?}"
            )));
        }
        let (outer, size, inner) = split_axis(&shape, axis);
        let v = self.value_ref();
        let x = v.data();
        let mut out = vec![0.0f32; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = 0.0f64;
                for s in 0..size {
                    acc += x[(o * size + s) * inner + i] as f64;
                }
                out[o * inner + i] = acc as f32;
            }
        }
        drop(v);
        let t = Tensor::from_parts(without_axis(&shape, axis), out);
        Ok(self.graph.push(t, Op::SumAxis(axis), &[self.id]))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'g>> {
        let shape = self.shape();
        let n = shape.get(axis).copied().unwrap_or(1).max(1);
        Ok(self.sum_axis(axis)?.scale(1.0 / n as f32))
    }

    /// Replicate along a new axis so the result has `shape`.
    pub(crate) fn expand_axis(self, axis: usize, shape: &[usize]) -> Result<Var<'g>> {
        let expected = without_axis(shape, axis);
        if self.shape() != expected {
            return Err(Error::dim(format!(
                "cannot expand {:?} to {shape:?} along axis {axis}",
                self.shape()
            )));
        }
        let (outer, size, inner) = split_axis(shape, axis);
        let v = self.value_ref();
        let x = v.data();
        let mut out = vec![0.0f32; outer * size * inner];
        for o in 0..outer {
            for s in 0..size {
                let dst = (o * size + s) * inner;
                out[dst..dst + inner].copy_from_slice(&x[o * inner..(o + 1) * inner]);
            }
        }
        drop(v);
        let t = Tensor::from_parts(shape.to_vec(), out);
        Ok(self.graph.push(
            t,
            Op::ExpandAxis { axis },
            &[self.id],
        ))
    }

    fn expand_all(self, shape: &[usize]) -> Var<'g> {
        let t = Tensor::full(shape, self.item());
        self.graph
            .push(t, Op::ExpandAll, &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        if self.value_ref().shape() == shape {
            return Ok(self);
        }
        let t = self.value_ref().reshape(shape)?;
        Ok(self.graph.push(t, Op::Reshape, &[self.id]))
    }

    /// `self · other` for rank-2 operands.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.matmul_t(other, false, false)
    }

    pub(crate) fn matmul_t(self, other: Var<'g>, ta: bool, tb: bool) -> Result<Var<'g>> {
        self.same_graph(&other);
        let a = self.value();
        let b = other.value();
        if a.rank() != 2 || b.rank() != 2 {
            return Err(Error::dim(format!(
                "matmul needs matrices, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (ar, ac) = (a.shape()[0], a.shape()[1]);
        let (br, bc) = (b.shape()[0], b.shape()[1]);
        let k1 = if ta { ar } else { ac };
        let k2 = if tb { bc } else { br };
        if k1 != k2 {
            return Err(Error::dim(format!(
                "matmul inner dimensions disagree: {:?}{} x {:?}{}",
                a.shape(),
                if ta { "ᵀ" } else { "" },
                b.shape(),
                if tb { "ᵀ" } else { "" }
            )));
        }
        let (m, n, c) = gemm(a.data(), ar, ac, ta, b.data(), br, bc, tb);
        let t = Tensor::from_parts(vec![m, n], c);
        Ok(self
            .graph
            .push(t, Op::MatMul { ta, tb }, &[self.id, other.id]))
    }

    /// `[m×p] ++ [m×q] -> [m×(p+q)]`.
    pub fn concat_cols(self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(&other);
        let a = self.value();
        let b = other.value();
        if a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0] {
            return Err(Error::dim(format!(
                "cannot concatenate columns of {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (m, p, q) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        let t = Tensor::from_parts(vec![m, p + q], data);
        Ok(self.graph.push(t, Op::ConcatCols, &[self.id, other.id]))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'g>> {
        let a = self.value();
        if a.rank() != 2 || start + len > a.shape()[1] {
            return Err(Error::dim(format!(
                "columns {start}..{} out of range for {:?}",
                start + len,
                a.shape()
            )));
        }
        let m = a.shape()[0];
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&a.row(i)[start..start + len]);
        }
        let t = Tensor::from_parts(vec![m, len], data);
        Ok(self
            .graph
            .push(t, Op::SliceCols { start }, &[self.id]))
    }

    fn pad_cols(self, start: usize, total: usize) -> Var<'g> {
        let a = self.value();
        let (m, w) = (a.shape()[0], a.shape()[1]);
        let mut data = vec![0.0f32; m * total];
        for i in 0..m {
            data[i * total + start..i * total + start + w].copy_from_slice(a.row(i));
        }
        let t = Tensor::from_parts(vec![m, total], data);
        self.graph
            .push(t, Op::PadCols { start }, &[self.id])
    }

    /// Row lookup: `out[i] = self[index[i]]`.
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'g>> {
        let t = self.value();
        if t.rank() != 2 {
            return Err(Error::dim(format!("gather_rows on {:?}", t.shape())));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= t.shape()[0]) {
            return Err(Error::data(format!(
                "row index {bad} out of range for table {:?}",
                t.shape()
            )));
        }
        let out = t.select_rows(index);
        Ok(self
            .graph
            .push(out, Op::Gather(Rc::new(index.to_vec())), &[self.id]))
    }

    fn scatter_rows(self, index: Rc<Vec<usize>>, rows: usize) -> Var<'g> {
        let g = self.value();
        let w = g.row_len();
        let mut data = vec![0.0f32; rows * w];
        for (i, &r) in index.iter().enumerate() {
            for (d, s) in data[r * w..(r + 1) * w].iter_mut().zip(g.row(i)) {
                *d += s;
            }
        }
        let t = Tensor::from_parts(vec![rows, w], data);
        self.graph
            .push(t, Op::ScatterRows(index), &[self.id])
    }

    pub fn conv2d(self, weight: Var<'g>, bias: Var<'g>, stride: usize, padding: usize) -> Result<Var<'g>> {
        nn::conv2d(self, weight, bias, stride, padding)
    }

    pub fn max_pool2d(self, size: usize, stride: usize) -> Result<Var<'g>> {
        nn::max_pool2d(self, size, stride)
    }

    /// Batch normalization over every axis except 1 (the channel axis).
    ///
    /// With `running = None` batch statistics are used and returned; with
    /// `Some((mean, var))` those fixed statistics are used instead.
    pub fn batch_norm(
        self,
        gamma: Var<'g>,
        beta: Var<'g>,
        eps: f32,
        running: Option<(&[f32], &[f32])>,
    ) -> Result<(Var<'g>, Option<super::BatchStats>)> {
        nn::batch_norm(self, gamma, beta, eps, running)
    }

    /// Mean over rows of `-log softmax(self)[label]`.
    pub fn softmax_cross_entropy(self, labels: &[usize]) -> Result<Var<'g>> {
        nn::softmax_cross_entropy(self, labels)
    }
}

/// Input gradients of `op` given the output gradient `g`, as graph nodes.
pub(super) fn backward_rule<'g>(
    graph: &'g Graph,
    op: &Op,
    inputs: &[usize],
    out: usize,
    g: Var<'g>,
    need: &[bool],
) -> Result<Vec<Option<Var<'g>>>> {
    let input = |k: usize| graph.var(inputs[k]);
    let output = graph.var(out);
    let r = match op {
        Op::Leaf => vec![],
        Op::MatMul { ta, tb } => {
            let (a, b) = (input(0), input(1));
            let ga = if need[0] {
                Some(match (ta, tb) {
                    (false, false) => g.matmul_t(b, false, true)?,
                    (false, true) => g.matmul_t(b, false, false)?,
                    (true, false) => b.matmul_t(g, false, true)?,
                    (true, true) => b.matmul_t(g, true, true)?,
                })
            } else {
                None
            };
            let gb = if need[1] {
                Some(match (ta, tb) {
                    (false, false) => a.matmul_t(g, true, false)?,
                    (false, true) => g.matmul_t(a, true, false)?,
                    (true, false) => a.matmul_t(g, false, false)?,
                    (true, true) => g.matmul_t(a, true, true)?,
                })
            } else {
                None
            };
            vec![ga, gb]
        }
        Op::Add => vec![Some(g), Some(g)],
        Op::Sub => vec![Some(g), need[1].then(|| g.scale(-1.0))],
        Op::Mul => {
            let ga = if need[0] { Some(g.mul(input(1))?) } else { None };
            let gb = if need[1] { Some(g.mul(input(0))?) } else { None };
            vec![ga, gb]
        }
        Op::Scale(c) => vec![Some(g.scale(*c))],
        Op::AddScalar => vec![Some(g)],
        Op::Square => vec![Some(g.mul(input(0).scale(2.0))?)],
        Op::Sqrt => vec![Some(g.mul(output.recip().scale(0.5))?)],
        Op::Recip => vec![Some(g.mul(output.square().scale(-1.0))?)],
        Op::Ln => vec![Some(g.mul(input(0).recip())?)],
        Op::Tanh => {
            let d = output.square().scale(-1.0).add_scalar(1.0);
            vec![Some(g.mul(d)?)]
        }
        Op::Sigmoid => {
            let d = output.mul(output.scale(-1.0).add_scalar(1.0))?;
            vec![Some(g.mul(d)?)]
        }
        Op::MulConst(mask) => vec![Some(g.mul_const(mask.clone())?)],
        Op::LeakyRelu(slope) => {
            let s = *slope;
            let mask = input(0)
                .value_ref()
                .map(|x| if x >= 0.0 { 1.0 } else { s });
            vec![Some(g.mul_const(Rc::new(mask))?)]
        }
        Op::SumAll => {
            let shape = input(0).shape();
            vec![Some(g.expand_all(&shape))]
        }
        Op::ExpandAll => vec![Some(g.sum())],
        Op::SumAxis(axis) => {
            let shape = input(0).shape();
            let g = g.reshape(&without_axis(&shape, *axis))?;
            vec![Some(g.expand_axis(*axis, &shape)?)]
        }
        Op::ExpandAxis { axis, .. } => {
            let shape = input(0).shape();
            vec![Some(g.sum_axis(*axis)?.reshape(&shape)?)]
        }
        Op::Reshape => {
            let shape = input(0).shape();
            vec![Some(g.reshape(&shape)?)]
        }
        Op::ConcatCols => {
            let p = input(0).shape()[1];
            let q = input(1).shape()[1];
            vec![
                if need[0] { Some(g.slice_cols(0, p)?) } else { None },
                if need[1] { Some(g.slice_cols(p, q)?) } else { None },
            ]
        }
        Op::SliceCols { start } => {
            let total = input(0).shape()[1];
            vec![Some(g.pad_cols(*start, total))]
        }
        Op::PadCols { start } => {
            let w = input(0).shape()[1];
            vec![Some(g.slice_cols(*start, w)?)]
        }
        Op::Gather(index) => {
            let rows = input(0).shape()[0];
            vec![Some(g.scatter_rows(index.clone(), rows))]
        }
        Op::ScatterRows(index) => vec![Some(g.gather_rows(index)?)],
        Op::Conv2d { stride, padding } => {
            nn::conv2d_backward(graph, input(0), input(1), &g.value(), *stride, *padding, need)
        }
        Op::BatchNorm(saved) => nn::batch_norm_backward(graph, input(0), input(1), &g.value(), saved, need),
        Op::MaxPool2d { size, stride } => {
            vec![Some(nn::max_pool2d_backward(graph, input(0), &g.value(), *size, *stride))]
        }
        Op::SoftmaxCe(labels) => {
            vec![Some(nn::softmax_cross_entropy_backward(graph, input(0), &g.value(), labels))]
        }
    };
    Ok(r)
}
