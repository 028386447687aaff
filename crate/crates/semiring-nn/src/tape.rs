//! Minimal reverse-mode autodiff tape.
//!
//! Operations append nodes in topological order; [`Tape::backward`] replays
//! them once in reverse, routing gradients with the contexts recorded during
//! the forward pass (tropical winners, log-plus softmax rows, layer-norm
//! statistics, cross-entropy softmax).

use crate::error::{Error, Result};
use crate::linalg::{self, MatmulCtx};
use crate::scalar::Scalar;
use crate::semiring::SemiringSpec;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

struct Node<T: Scalar> {
    label: String,
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    op: Op<T>,
}

enum Op<T: Scalar> {
    Leaf,
    LinearMatmul {
        x: Var,
        w: Var,
    },
    SemiringMatmul {
        spec: SemiringSpec,
        x: Var,
        w: Var,
        ctx: MatmulCtx<T>,
    },
    LayerNorm {
        x: Var,
        gamma: Option<Var>,
        beta: Option<Var>,
        normed: Tensor<T>,
        inv_sd: Vec<T>,
    },
    Relu {
        x: Var,
    },
    Gelu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Reshape {
        x: Var,
    },
    DepthwiseConv {
        x: Var,
        kernel: Var,
        height: usize,
        width: usize,
        channels: usize,
        ksize: usize,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        softmax: Tensor<T>,
    },
}

fn add_to<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

fn grad_buf<'a, T: Scalar>(nodes: &'a mut [Node<T>], v: Var) -> &'a mut [T] {
    let len = nodes[v.0].value.len();
    nodes[v.0]
        .grad
        .get_or_insert_with(|| vec![T::zero(); len])
        .as_mut_slice()
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, label: impl Into<String>, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { label: label.into(), value, grad: None, op });
        Var(self.nodes.len() - 1)
    }

    /// Record an input or parameter value.
    pub fn leaf(&mut self, label: impl Into<String>, value: Tensor<T>) -> Var {
        self.push(label, value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.nodes[v.0].grad.as_ref()?;
        Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// `Y = X · Wᵀ` with `X[b×m]`, `W[n×m]`.
    pub fn linear_matmul(&mut self, label: impl Into<String>, x: Var, w: Var) -> Result<Var> {
        let y = linalg::linear_matmul(self.value(x), self.value(w))?;
        Ok(self.push(label, y, Op::LinearMatmul { x, w }))
    }

    /// Semiring product `Y = X ⊙ Wᵀ`, recording the backward context.
    pub fn semiring_matmul(
        &mut self,
        label: impl Into<String>,
        spec: SemiringSpec,
        x: Var,
        w: Var,
    ) -> Result<Var> {
        let (y, ctx) = linalg::semiring_matmul_fwd(spec, self.value(x), self.value(w))?;
        Ok(self.push(label, y, Op::SemiringMatmul { spec, x, w, ctx }))
    }

    /// Row-wise layer normalization over the last axis of `x[b×w]`, with an
    /// optional affine transform.
    pub fn layer_norm(
        &mut self,
        label: impl Into<String>,
        x: Var,
        affine: Option<(Var, Var)>,
        eps: T,
    ) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "layer norm expects a matrix, got {:?}",
                xv.shape()
            )));
        }
        let (b, w) = (xv.rows(), xv.cols());
        if let Some((g, be)) = affine {
            if self.value(g).len() != w || self.value(be).len() != w {
                return Err(Error::ShapeMismatch(format!(
                    "layer norm affine: gamma{:?}/beta{:?} vs width {}",
                    self.value(g).shape(),
                    self.value(be).shape(),
                    w
                )));
            }
        }
        let xv = self.value(x);
        let width = T::from_usize(w);
        let mut normed = Tensor::zeros(vec![b, w]);
        let mut inv_sd = vec![T::zero(); b];
        for bi in 0..b {
            let row = xv.row(bi);
            let mean = row.iter().copied().sum::<T>() / width;
            let var = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<T>()
                / width;
            let inv = (var + eps).sqrt().recip();
            inv_sd[bi] = inv;
            for j in 0..w {
                normed.data_mut()[bi * w + j] = (row[j] - mean) * inv;
            }
        }
        let value = match affine {
            None => normed.clone(),
            Some((g, be)) => {
                let gv = self.value(g).data();
                let bv = self.value(be).data();
                let mut out = normed.clone();
                for bi in 0..b {
                    for j in 0..w {
                        let v = out.at2(bi, j) * gv[j] + bv[j];
                        out.set2(bi, j, v);
                    }
                }
                out
            }
        };
        let (gamma, beta) = match affine {
            Some((g, be)) => (Some(g), Some(be)),
            None => (None, None),
        };
        Ok(self.push(label, value, Op::LayerNorm { x, gamma, beta, normed, inv_sd }))
    }

    pub fn relu(&mut self, label: impl Into<String>, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(label, value, Op::Relu { x })
    }

    /// GELU with the exact Gaussian CDF: `x · Φ(x)`.
    pub fn gelu(&mut self, label: impl Into<String>, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| v * gauss_cdf(v))
            .collect();
        let value = Tensor::new(self.value(x).shape().to_vec(), data).expect("same shape");
        self.push(label, value, Op::Gelu { x })
    }

    /// Elementwise residual addition.
    pub fn add(&mut self, label: impl Into<String>, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&u, &v)| u + v)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(label, value, Op::Add { a, b }))
    }

    /// View the same row-major buffer under a different shape.
    pub fn reshape(&mut self, label: impl Into<String>, x: Var, shape: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.len() {
            return Err(Error::ShapeMismatch(format!(
                "reshape: {:?} has {} elements, target {:?} wants {}",
                xv.shape(),
                xv.len(),
                shape,
                shape.iter().product::<usize>()
            )));
        }
        let value = Tensor::new(shape, xv.data().to_vec())?;
        Ok(self.push(label, value, Op::Reshape { x }))
    }

    /// Depthwise convolution of `x[h×w×c]` with an odd `k×k` kernel per
    /// channel, zero padding, stride 1; output shape equals input shape.
    pub fn depthwise_conv(
        &mut self,
        label: impl Into<String>,
        x: Var,
        kernel: Var,
    ) -> Result<Var> {
        let xv = self.value(x);
        let kv = self.value(kernel);
        if xv.shape().len() != 3 || kv.shape().len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "depthwise conv: x{:?}, kernel{:?} (want x[h\u{d7}w\u{d7}c], kernel[k\u{d7}k\u{d7}c])",
                xv.shape(),
                kv.shape()
            )));
        }
        let (h, w, c) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let k = kv.shape()[0];
        if kv.shape() != [k, k, c] || k % 2 == 0 {
            return Err(Error::ShapeMismatch(format!(
                "depthwise conv kernel must be odd square per channel: kernel{:?}, channels {}",
                kv.shape(),
                c
            )));
        }
        let value = depthwise_forward(xv, kv, h, w, c, k);
        Ok(self.push(
            label,
            value,
            Op::DepthwiseConv { x, kernel, height: h, width: w, channels: c, ksize: k },
        ))
    }

    /// Mean softmax cross-entropy over a batch of logits `[b×c]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 || lv.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "cross entropy: logits{:?} vs {} labels",
                lv.shape(),
                labels.len()
            )));
        }
        let (b, c) = (lv.rows(), lv.cols());
        let mut softmax = Tensor::zeros(vec![b, c]);
        let mut loss = T::zero();
        for bi in 0..b {
            let row = lv.row(bi);
            let mut hi = T::neg_infinity();
            for &v in row {
                if v > hi {
                    hi = v;
                }
            }
            let mut sum = T::zero();
            for j in 0..c {
                let e = (row[j] - hi).exp();
                softmax.data_mut()[bi * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                softmax.data_mut()[bi * c + j] /= sum;
            }
            loss += hi + sum.ln() - row[labels[bi]];
        }
        loss /= T::from_usize(b);
        let value = Tensor::scalar(loss);
        Ok(self.push(
            "cross_entropy",
            value,
            Op::CrossEntropy { logits, labels: labels.to_vec(), softmax },
        ))
    }

    /// Seed the gradient of a scalar node with 1 and sweep the tape in
    /// reverse topological order exactly once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..self.nodes.len()).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(grad) = node.grad.as_ref() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {}
                Op::LinearMatmul { x, w } => {
                    let gy = Tensor::new(node.value.shape().to_vec(), grad.clone())?;
                    let (w_bar, x_bar) =
                        linalg::backward_linear(&before[x.0].value, &before[w.0].value, &gy)?;
                    add_to(grad_buf(before, *x), x_bar.data());
                    add_to(grad_buf(before, *w), w_bar.data());
                }
                Op::SemiringMatmul { spec: _, x, w, ctx } => {
                    let gy = Tensor::new(node.value.shape().to_vec(), grad.clone())?;
                    let (w_bar, x_bar) = match ctx {
                        MatmulCtx::Linear => {
                            linalg::backward_linear(&before[x.0].value, &before[w.0].value, &gy)?
                        }
                        MatmulCtx::Tropical { winners } => linalg::backward_tropical(
                            &before[w.0].value,
                            &before[x.0].value,
                            &gy,
                            winners,
                        )?,
                        MatmulCtx::LogPlus { weights } => linalg::backward_logplus(
                            &before[w.0].value,
                            &before[x.0].value,
                            &gy,
                            weights,
                        )?,
                    };
                    add_to(grad_buf(before, *x), x_bar.data());
                    add_to(grad_buf(before, *w), w_bar.data());
                }
                Op::LayerNorm { x, gamma, beta, normed, inv_sd } => {
                    let (b, w) = (normed.rows(), normed.cols());
                    let width = T::from_usize(w);
                    // pull the gradient back through the affine transform
                    let mut dnormed = vec![T::zero(); b * w];
                    match gamma {
                        Some(g) => {
                            let gv: Vec<T> = before[g.0].value.data().to_vec();
                            for bi in 0..b {
                                for j in 0..w {
                                    dnormed[bi * w + j] = grad[bi * w + j] * gv[j];
                                }
                            }
                            let gslice = grad_buf(before, *g);
                            for bi in 0..b {
                                for j in 0..w {
                                    gslice[j] += grad[bi * w + j] * normed.at2(bi, j);
                                }
                            }
                        }
                        None => dnormed.copy_from_slice(grad),
                    }
                    if let Some(be) = beta {
                        let bslice = grad_buf(before, *be);
                        for bi in 0..b {
                            for j in 0..w {
                                bslice[j] += grad[bi * w + j];
                            }
                        }
                    }
                    let xslice = grad_buf(before, *x);
                    for bi in 0..b {
                        let mut mean_d = T::zero();
                        let mut mean_dn = T::zero();
                        for j in 0..w {
                            mean_d += dnormed[bi * w + j];
                            mean_dn += dnormed[bi * w + j] * normed.at2(bi, j);
                        }
                        mean_d /= width;
                        mean_dn /= width;
                        for j in 0..w {
                            xslice[bi * w + j] += inv_sd[bi]
                                * (dnormed[bi * w + j] - mean_d - normed.at2(bi, j) * mean_dn);
                        }
                    }
                }
                Op::Relu { x } => {
                    let mask: Vec<T> = before[x.0]
                        .value
                        .data()
                        .iter()
                        .zip(grad)
                        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                        .collect();
                    add_to(grad_buf(before, *x), &mask);
                }
                Op::Gelu { x } => {
                    let contrib: Vec<T> = before[x.0]
                        .value
                        .data()
                        .iter()
                        .zip(grad)
                        .map(|(&v, &g)| g * (gauss_cdf(v) + v * gauss_pdf(v)))
                        .collect();
                    add_to(grad_buf(before, *x), &contrib);
                }
                Op::Add { a, b } => {
                    let grad = grad.clone();
                    add_to(grad_buf(before, *a), &grad);
                    add_to(grad_buf(before, *b), &grad);
                }
                Op::Reshape { x } => {
                    let grad = grad.clone();
                    add_to(grad_buf(before, *x), &grad);
                }
                Op::DepthwiseConv { x, kernel, height, width, channels, ksize } => {
                    let (h, w, c, k) = (*height, *width, *channels, *ksize);
                    let (k_bar, x_bar) = depthwise_backward(
                        &before[x.0].value,
                        &before[kernel.0].value,
                        grad,
                        h,
                        w,
                        c,
                        k,
                    );
                    add_to(grad_buf(before, *x), &x_bar);
                    add_to(grad_buf(before, *kernel), &k_bar);
                }
                Op::CrossEntropy { logits, labels, softmax } => {
                    let g = grad[0];
                    let (b, c) = (softmax.rows(), softmax.cols());
                    let scale = g / T::from_usize(b);
                    let gslice = grad_buf(before, *logits);
                    for bi in 0..b {
                        for j in 0..c {
                            let onehot = if labels[bi] == j { T::one() } else { T::zero() };
                            gslice[bi * c + j] += scale * (softmax.at2(bi, j) - onehot);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Label of the first node (in forward order) holding a non-finite value,
    /// used to diagnose overflow during training.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.value.data().iter().any(|v| !v.is_finite()))
            .map(|n| n.label.as_str())
    }

    /// Smallest winner margin over all tropical semiring products recorded on
    /// the tape; `None` when the tape has no tropical node.
    pub fn min_tropical_gap(&self) -> Option<f64> {
        let mut gap: Option<f64> = None;
        for node in &self.nodes {
            if let Op::SemiringMatmul { spec, x, w, ctx: MatmulCtx::Tropical { .. } } = &node.op {
                let g = crate::verify::tie_distance(
                    *spec,
                    &self.nodes[w.0].value.cast::<f64>(),
                    &self.nodes[x.0].value.cast::<f64>(),
                );
                gap = Some(gap.map_or(g, |cur| cur.min(g)));
            }
        }
        gap
    }
}

fn gauss_cdf<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    half * (T::one() + (x * inv_sqrt2).erf())
}

fn gauss_pdf<T: Scalar>(x: T) -> T {
    let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    (-(x * x) * T::from_f64(0.5)).exp() * inv_sqrt_2pi
}

fn depthwise_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
) -> Tensor<T> {
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros(vec![h, w, c]);
    let xd = x.data();
    let kd = kernel.data();
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut acc = T::zero();
                for di in 0..k {
                    let si = i as isize + di as isize - pad;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..k {
                        let sj = j as isize + dj as isize - pad;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        acc += kd[(di * k + dj) * c + ch]
                            * xd[(si as usize * w + sj as usize) * c + ch];
                    }
                }
                out.data_mut()[(i * w + j) * c + ch] = acc;
            }
        }
    }
    out
}

fn depthwise_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    grad: &[T],
    h: usize,
    w: usize,
    c: usize,
    k: usize,
) -> (Vec<T>, Vec<T>) {
    let pad = (k / 2) as isize;
    let mut k_bar = vec![T::zero(); k * k * c];
    let mut x_bar = vec![T::zero(); h * w * c];
    let xd = x.data();
    let kd = kernel.data();
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let g = grad[(i * w + j) * c + ch];
                if g == T::zero() {
                    continue;
                }
                for di in 0..k {
                    let si = i as isize + di as isize - pad;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for dj in 0..k {
                        let sj = j as isize + dj as isize - pad;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        let src = (si as usize * w + sj as usize) * c + ch;
                        let kidx = (di * k + dj) * c + ch;
                        k_bar[kidx] += g * xd[src];
                        x_bar[src] += g * kd[kidx];
                    }
                }
            }
        }
    }
    (k_bar, x_bar)
}
