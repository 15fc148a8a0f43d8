//! Convolution, batch normalization, pooling and the fused softmax cross
//! entropy. Their backward rules compute plain tensors, so these ops are
//! first-order only.

use std::rc::Rc;

use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Per-channel batch mean and (biased) variance from a train-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    /// Number of values each channel statistic was computed from.
    pub count: usize,
}

#[derive(Debug)]
pub(crate) struct BnSaved {
    mean: Vec<f32>,
    inv_std: Vec<f32>,
    batch_stats: bool,
}

struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(x: &[usize], k: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if x.len() != 4 || k.len() != 4 || x[1] != k[1] {
            return Err(Error::dim(format!(
                "conv2d input {x:?} incompatible with kernel {k:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d stride must be positive"));
        }
        let (h, w) = (x[2] + 2 * pad, x[3] + 2 * pad);
        if k[2] > h || k[3] > w {
            return Err(Error::dim(format!(
                "kernel {k:?} larger than padded input {x:?}"
            )));
        }
        Ok(ConvGeom {
            n: x[0],
            c: x[1],
            h: x[2],
            w: x[3],
            o: k[0],
            kh: k[2],
            kw: k[3],
            ho: (h - k[2]) / stride + 1,
            wo: (w - k[3]) / stride + 1,
            stride,
            pad,
        })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_hw(&self) -> usize {
        self.ho * self.wo
    }

    /// Position in the unpadded input read by (channel, ki, kj) at output (oy, ox).
    fn source(&self, ki: usize, kj: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.pad)?;
        let x = (ox * self.stride + kj).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }

    /// `[patch × out_hw]` column matrix of one sample.
    fn im2col(&self, img: &[f32]) -> Vec<f32> {
        let ohw = self.out_hw();
        let mut cols = vec![0.0f32; self.patch() * ohw];
        for ch in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ch * self.kh + ki) * self.kw + kj;
                    for oy in 0..self.ho {
                        for ox in 0..self.wo {
                            if let Some((y, x)) = self.source(ki, kj, oy, ox) {
                                cols[row * ohw + oy * self.wo + ox] =
                                    img[(ch * self.h + y) * self.w + x];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f32], img: &mut [f32]) {
        let ohw = self.out_hw();
        for ch in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ch * self.kh + ki) * self.kw + kj;
                    for oy in 0..self.ho {
                        for ox in 0..self.wo {
                            if let Some((y, x)) = self.source(ki, kj, oy, ox) {
                                img[(ch * self.h + y) * self.w + x] +=
                                    cols[row * ohw + oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `[N, C, H, W]` with `[O, C, kh, kw]` plus a per-channel bias.
pub(super) fn conv2d<'g>(
    x: Var<'g>,
    weight: Var<'g>,
    bias: Var<'g>,
    stride: usize,
    padding: usize,
) -> Result<Var<'g>> {
    let xv = x.value();
    let wv = weight.value();
    let bv = bias.value();
    let geo = ConvGeom::new(xv.shape(), wv.shape(), stride, padding)?;
    if bv.len() != geo.o {
        return Err(Error::dim(format!(
            "conv2d bias {:?} for {} output channels",
            bv.shape(),
            geo.o
        )));
    }
    let in_len = geo.c * geo.h * geo.w;
    let ohw = geo.out_hw();
    let mut out = Vec::with_capacity(geo.n * geo.o * ohw);
    for i in 0..geo.n {
        let cols = geo.im2col(&xv.data()[i * in_len..(i + 1) * in_len]);
        let (_, _, mut y) = gemm(wv.data(), geo.o, geo.patch(), false, &cols, geo.patch(), ohw, false);
        for (oc, chunk) in y.chunks_mut(ohw).enumerate() {
            let b = bv.data()[oc];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        out.extend_from_slice(&y);
    }
    let t = Tensor::from_parts(vec![geo.n, geo.o, geo.ho, geo.wo], out);
    Ok(x.graph.push(
        t,
        Op::Conv2d { stride, padding },
        &[x.id, weight.id, bias.id],
    ))
}

pub(super) fn conv2d_backward<'g>(
    graph: &'g Graph,
    x: Var<'g>,
    weight: Var<'g>,
    g: &Tensor,
    stride: usize,
    padding: usize,
    need: &[bool],
) -> Vec<Option<Var<'g>>> {
    let xv = x.value();
    let wv = weight.value();
    let geo = ConvGeom::new(xv.shape(), wv.shape(), stride, padding).expect("validated in forward");
    let in_len = geo.c * geo.h * geo.w;
    let ohw = geo.out_hw();
    let patch = geo.patch();
    let mut dx = need[0].then(|| vec![0.0f32; xv.len()]);
    let mut dw = need[1].then(|| vec![0.0f32; wv.len()]);
    let mut db = need[2].then(|| vec![0.0f64; geo.o]);
    for i in 0..geo.n {
        let gi = &g.data()[i * geo.o * ohw..(i + 1) * geo.o * ohw];
        if let Some(dw) = dw.as_mut() {
            let cols = geo.im2col(&xv.data()[i * in_len..(i + 1) * in_len]);
            let (_, _, part) = gemm(gi, geo.o, ohw, false, &cols, patch, ohw, true);
            dw.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        if let Some(dx) = dx.as_mut() {
            let (_, _, dcols) = gemm(wv.data(), geo.o, patch, true, gi, geo.o, ohw, false);
            geo.col2im(&dcols, &mut dx[i * in_len..(i + 1) * in_len]);
        }
        if let Some(db) = db.as_mut() {
            for (oc, chunk) in gi.chunks(ohw).enumerate() {
                db[oc] += chunk.iter().map(|&v| v as f64).sum::<f64>();
            }
        }
    }
    vec![
        dx.map(|d| graph.constant(Tensor::from_parts(xv.shape().to_vec(), d))),
        dw.map(|d| graph.constant(Tensor::from_parts(wv.shape().to_vec(), d))),
        db.map(|d| graph.constant(Tensor::from_parts(vec![geo.o], d.into_iter().map(|v| v as f32).collect()))),
    ]
}

/// `(batch, channels, spatial)` view of an input with channels on axis 1.
fn bn_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::dim(format!("batch_norm needs [N, C, ...], got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

pub(super) fn batch_norm<'g>(
    x: Var<'g>,
    gamma: Var<'g>,
    beta: Var<'g>,
    eps: f32,
    running: Option<(&[f32], &[f32])>,
) -> Result<(Var<'g>, Option<BatchStats>)> {
    let xv = x.value();
    let (n, c, s) = bn_dims(xv.shape())?;
    let gv = gamma.value();
    let bv = beta.value();
    if gv.len() != c || bv.len() != c {
        return Err(Error::dim(format!(
            "batch_norm affine {:?}/{:?} for {c} channels",
            gv.shape(),
            bv.shape()
        )));
    }
    let data = xv.data();
    let at = |i: usize, ch: usize, k: usize| data[(i * c + ch) * s + k];
    let (mean, var, stats) = match running {
        Some((rm, rv)) => {
            if rm.len() != c || rv.len() != c {
                return Err(Error::dim("running statistics size mismatch"));
            }
            (rm.to_vec(), rv.to_vec(), None)
        }
        None => {
            let count = n * s;
            if count == 0 {
                return Err(Error::contract("batch_norm over an empty batch"));
            }
            let mut mean = vec![0.0f32; c];
            let mut var = vec![0.0f32; c];
            for ch in 0..c {
                let mut acc = 0.0f64;
                for i in 0..n {
                    for k in 0..s {
                        acc += at(i, ch, k) as f64;
                    }
                }
                let mu = acc / count as f64;
                let mut sq = 0.0f64;
                for i in 0..n {
                    for k in 0..s {
                        let d = at(i, ch, k) as f64 - mu;
                        sq += d * d;
                    }
                }
                mean[ch] = mu as f32;
                var[ch] = (sq / count as f64) as f32;
            }
            let stats = BatchStats {
                mean: mean.clone(),
                var: var.clone(),
                count,
            };
            (mean, var, Some(stats))
        }
    };
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut out = vec![0.0f32; data.len()];
    for i in 0..n {
        for ch in 0..c {
            let (mu, is, ga, be) = (mean[ch], inv_std[ch], gv.data()[ch], bv.data()[ch]);
            for k in 0..s {
                let idx = (i * c + ch) * s + k;
                out[idx] = (data[idx] - mu) * is * ga + be;
            }
        }
    }
    let saved = BnSaved {
        mean,
        inv_std,
        batch_stats: running.is_none(),
    };
    let t = Tensor::from_parts(xv.shape().to_vec(), out);
    let y = x.graph.push(
        t,
        Op::BatchNorm(Rc::new(saved)),
        &[x.id, gamma.id, beta.id],
    );
    Ok((y, stats))
}

pub(super) fn batch_norm_backward<'g>(
    graph: &'g Graph,
    x: Var<'g>,
    gamma: Var<'g>,
    g: &Tensor,
    saved: &BnSaved,
    need: &[bool],
) -> Vec<Option<Var<'g>>> {
    let xv = x.value();
    let gv = gamma.value();
    let (n, c, s) = bn_dims(xv.shape()).expect("validated in forward");
    let count = (n * s) as f64;
    let data = xv.data();
    let gd = g.data();
    let mut dx = vec![0.0f32; data.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ch in 0..c {
        let (mu, is, ga) = (saved.mean[ch], saved.inv_std[ch], gv.data()[ch]);
        let mut sum_g = 0.0f64;
        let mut sum_g_xhat = 0.0f64;
        for i in 0..n {
            for k in 0..s {
                let idx = (i * c + ch) * s + k;
                let xhat = ((data[idx] - mu) * is) as f64;
                sum_g += gd[idx] as f64;
                sum_g_xhat += gd[idx] as f64 * xhat;
            }
        }
        dgamma[ch] = sum_g_xhat as f32;
        dbeta[ch] = sum_g as f32;
        if !need[0] {
            continue;
        }
        for i in 0..n {
            for k in 0..s {
                let idx = (i * c + ch) * s + k;
                dx[idx] = if saved.batch_stats {
                    let xhat = ((data[idx] - mu) * is) as f64;
                    let v = (gd[idx] as f64 - sum_g / count - xhat * sum_g_xhat / count)
                        * (ga * is) as f64;
                    v as f32
                } else {
                    gd[idx] * ga * is
                };
            }
        }
    }
    vec![
        need[0].then(|| graph.constant(Tensor::from_parts(xv.shape().to_vec(), dx))),
        need[1].then(|| graph.constant(Tensor::from_parts(vec![c], dgamma))),
        need[2].then(|| graph.constant(Tensor::from_parts(vec![c], dbeta))),
    ]
}

fn pool_dims(shape: &[usize], size: usize, stride: usize) -> Result<[usize; 6]> {
    if shape.len() != 4 {
        return Err(Error::dim(format!("max_pool2d needs [N, C, H, W], got {shape:?}")));
    }
    if size == 0 || stride == 0 {
        return Err(Error::contract("pool size and stride must be positive"));
    }
    let (h, w) = (shape[2], shape[3]);
    if h < size || w < size {
        return Err(Error::dim(format!(
            "pool window {size} larger than input {shape:?}"
        )));
    }
    Ok([shape[0], shape[1], h, w, (h - size) / stride + 1, (w - size) / stride + 1])
}

/// Flat input index of the first maximum of each pooling window.
fn pool_argmax(x: &Tensor, size: usize, stride: usize) -> Result<(Vec<usize>, [usize; 6])> {
    let dims = pool_dims(x.shape(), size, stride)?;
    let [n, c, h, w, ho, wo] = dims;
    let d = x.data();
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if d[idx] > d[best] {
                            best = idx;
                        }
                    }
                }
                arg.push(best);
            }
        }
    }
    Ok((arg, dims))
}

pub(super) fn max_pool2d(x: Var<'_>, size: usize, stride: usize) -> Result<Var<'_>> {
    let xv = x.value();
    let (arg, [n, c, _, _, ho, wo]) = pool_argmax(&xv, size, stride)?;
    let data = arg.iter().map(|&i| xv.data()[i]).collect();
    let t = Tensor::from_parts(vec![n, c, ho, wo], data);
    Ok(x.graph.push(t, Op::MaxPool2d { size, stride }, &[x.id]))
}

pub(super) fn max_pool2d_backward<'g>(
    graph: &'g Graph,
    x: Var<'g>,
    g: &Tensor,
    size: usize,
    stride: usize,
) -> Var<'g> {
    let xv = x.value();
    let (arg, _) = pool_argmax(&xv, size, stride).expect("validated in forward");
    let mut dx = vec![0.0f32; xv.len()];
    for (&i, &gv) in arg.iter().zip(g.data()) {
        dx[i] += gv;
    }
    graph.constant(Tensor::from_parts(xv.shape().to_vec(), dx))
}

fn softmax_rows(logits: &Tensor) -> Vec<f64> {
    let k = logits.row_len();
    let mut p = Vec::with_capacity(logits.len());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        p.extend(exps.iter().map(|e| e / z));
    }
    debug_assert_eq!(p.len(), logits.rows() * k);
    p
}

pub(super) fn softmax_cross_entropy<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    let lv = logits.value();
    if lv.rank() != 2 || lv.shape()[0] != labels.len() {
        return Err(Error::dim(format!(
            "logits {:?} for {} labels",
            lv.shape(),
            labels.len()
        )));
    }
    let k = lv.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::data(format!("label {bad} out of range for {k} classes")));
    }
    let m = labels.len().max(1);
    let mut total = 0.0f64;
    for (i, &l) in labels.iter().enumerate() {
        let row = lv.row(i);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let lse = max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
        total += lse - row[l] as f64;
    }
    let t = Tensor::scalar((total / m as f64) as f32);
    Ok(logits.graph.push(
        t,
        Op::SoftmaxCe(Rc::new(labels.to_vec())),
        &[logits.id],
    ))
}

pub(super) fn softmax_cross_entropy_backward<'g>(
    graph: &'g Graph,
    logits: Var<'g>,
    g: &Tensor,
    labels: &[usize],
) -> Var<'g> {
    let lv = logits.value();
    let k = lv.shape()[1];
    let scale = g.item() as f64 / labels.len().max(1) as f64;
    let mut p = softmax_rows(&lv);
    for (i, &l) in labels.iter().enumerate() {
        p[i * k + l] -= 1.0;
    }
    let d = p.into_iter().map(|v| (v * scale) as f32).collect();
    graph.constant(Tensor::from_parts(lv.shape().to_vec(), d))
}
