//! Quasilinear matrix operators `B ⊙ x` with batching and exact reverse-mode
//! gradients for every semiring.
//!
//! Layout is row-major with the batch as the leading axis: inputs are
//! `X[b×m]`, weights `W[n×m]`, outputs `Y[b×n]`. The forward pass records
//! whatever the backward rule needs (argmax winners for the tropical kinds,
//! softmax rows for log-plus) instead of recomputing it, so forward and
//! backward always agree under floating-point nondeterminism.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::semiring::{SemiringKind, SemiringSpec};
use crate::tensor::Tensor;

/// Winner index recorded when an entire reduction row was the additive
/// identity; such outputs carry no gradient.
pub const NO_WINNER: usize = usize::MAX;

/// Forward context saved for the backward pass of a semiring matmul.
#[derive(Debug, Clone)]
pub enum MatmulCtx<T: Scalar> {
    /// Ordinary product; gradients are recomputed from the saved operands.
    Linear,
    /// `winners[b*n + i]` is the argmax (argmin for min-plus) input index of
    /// output `(b, i)`; ties go to the lowest index.
    Tropical { winners: Vec<usize> },
    /// `weights[(b*n + i)*m + j]` is the softmax weight of input `j` for
    /// output `(b, i)`; each non-degenerate row sums to 1.
    LogPlus { weights: Vec<T> },
}

fn check_matmul_shapes<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if x.shape().len() != 2 || w.shape().len() != 2 || x.cols() != w.cols() {
        return Err(Error::ShapeMismatch(format!(
            "matmul: X{:?} incompatible with W{:?} (want X[b\u{d7}m], W[n\u{d7}m])",
            x.shape(),
            w.shape()
        )));
    }
    Ok((x.rows(), x.cols(), w.rows()))
}

/// y = W ⊙ x for a single vector, `y_i = ⊕_j (w_ij ⊙ x_j)`.
pub fn semiring_matvec<T: Scalar>(
    spec: SemiringSpec,
    w: &Tensor<T>,
    x: &Tensor<T>,
) -> Result<Tensor<T>> {
    if x.shape().len() != 1 || w.shape().len() != 2 || w.cols() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "matvec: W{:?} incompatible with x{:?}",
            w.shape(),
            x.shape()
        )));
    }
    let xb = Tensor::new(vec![1, x.len()], x.data().to_vec())?;
    let y = semiring_matmul(spec, &xb, w)?;
    Tensor::new(vec![w.rows()], y.into_data())
}

/// Batched `Y = X ⊙ Wᵀ`: row k of the output is `W ⊙ (row k of X)`.
pub fn semiring_matmul<T: Scalar>(
    spec: SemiringSpec,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<Tensor<T>> {
    Ok(semiring_matmul_fwd(spec, x, w)?.0)
}

/// Batched semiring matmul that also records the backward context.
pub fn semiring_matmul_fwd<T: Scalar>(
    spec: SemiringSpec,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<(Tensor<T>, MatmulCtx<T>)> {
    let (b, m, n) = check_matmul_shapes(x, w)?;
    match spec.kind {
        SemiringKind::Linear => {
            let y = linear_matmul(x, w)?;
            Ok((y, MatmulCtx::Linear))
        }
        SemiringKind::MaxPlus | SemiringKind::MinPlus => {
            let take_max = spec.kind == SemiringKind::MaxPlus;
            let mut y = vec![T::zero(); b * n];
            let mut winners = vec![NO_WINNER; b * n];
            let identity: T = spec.zero();
            for bi in 0..b {
                let row = x.row(bi);
                for i in 0..n {
                    let wrow = w.row(i);
                    let mut best = identity;
                    let mut winner = NO_WINNER;
                    for j in 0..m {
                        let term = spec.mul(wrow[j], row[j]);
                        if term.is_nan() {
                            best = T::nan();
                            winner = NO_WINNER;
                            break;
                        }
                        if winner == NO_WINNER && term != identity {
                            best = term;
                            winner = j;
                        } else if (take_max && term > best) || (!take_max && term < best) {
                            best = term;
                            winner = j;
                        }
                    }
                    y[bi * n + i] = best;
                    winners[bi * n + i] = winner;
                }
            }
            Ok((Tensor::new(vec![b, n], y)?, MatmulCtx::Tropical { winners }))
        }
        SemiringKind::LogPlus => {
            let mu = T::from_f64(spec.mu);
            let identity: T = spec.zero();
            let mut y = vec![T::zero(); b * n];
            let mut weights = vec![T::zero(); b * n * m];
            let mut z = vec![T::zero(); m];
            for bi in 0..b {
                let row = x.row(bi);
                for i in 0..n {
                    let wrow = w.row(i);
                    let mut shift = T::neg_infinity();
                    let mut poisoned = false;
                    for j in 0..m {
                        let term = spec.mul(wrow[j], row[j]);
                        if term.is_nan() {
                            poisoned = true;
                            break;
                        }
                        let zj = if term == identity { T::neg_infinity() } else { mu * term };
                        z[j] = zj;
                        if zj > shift {
                            shift = zj;
                        }
                    }
                    let out = bi * n + i;
                    if poisoned {
                        y[out] = T::nan();
                        continue;
                    }
                    if shift == T::neg_infinity() {
                        // whole row is the additive identity
                        y[out] = identity;
                        continue;
                    }
                    let mut sum = T::zero();
                    for &zj in z.iter() {
                        sum += (zj - shift).exp();
                    }
                    y[out] = (shift + sum.ln()) / mu;
                    let wslice = &mut weights[out * m..(out + 1) * m];
                    for (wj, &zj) in wslice.iter_mut().zip(z.iter()) {
                        *wj = (zj - shift).exp() / sum;
                    }
                }
            }
            Ok((Tensor::new(vec![b, n], y)?, MatmulCtx::LogPlus { weights }))
        }
    }
}

/// Component-wise `y_i ⊕ c_i`.
pub fn semiring_bias<T: Scalar>(
    spec: SemiringSpec,
    y: &Tensor<T>,
    c: &Tensor<T>,
) -> Result<Tensor<T>> {
    if y.shape() != c.shape() {
        return Err(Error::ShapeMismatch(format!(
            "bias: y{:?} incompatible with c{:?}",
            y.shape(),
            c.shape()
        )));
    }
    let data = y
        .data()
        .iter()
        .zip(c.data())
        .map(|(&a, &b)| spec.add(a, b))
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

/// Tropical backward: each output routes its whole gradient to the recorded
/// winner, `x̄_j = Σ_{(b,i): winner=j} ȳ_{b,i}` and `w̄_{i,winner} += ȳ_{b,i}`.
pub fn backward_tropical<T: Scalar>(
    w: &Tensor<T>,
    x: &Tensor<T>,
    y_bar: &Tensor<T>,
    winners: &[usize],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (b, m, n) = check_matmul_shapes(x, w)?;
    debug_assert_eq!(winners.len(), b * n);
    let mut w_bar = Tensor::zeros(vec![n, m]);
    let mut x_bar = Tensor::zeros(vec![b, m]);
    for bi in 0..b {
        for i in 0..n {
            let j = winners[bi * n + i];
            if j == NO_WINNER {
                continue;
            }
            let g = y_bar.at2(bi, i);
            x_bar.data_mut()[bi * m + j] += g;
            w_bar.data_mut()[i * m + j] += g;
        }
    }
    Ok((w_bar, x_bar))
}

/// Log-plus backward using the softmax rows saved by the forward pass:
/// `w̄_ij = s_ij·ȳ_i`, `x̄_j = Σ_i s_ij·ȳ_i`.
pub fn backward_logplus<T: Scalar>(
    w: &Tensor<T>,
    x: &Tensor<T>,
    y_bar: &Tensor<T>,
    weights: &[T],
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (b, m, n) = check_matmul_shapes(x, w)?;
    debug_assert_eq!(weights.len(), b * n * m);
    let mut w_bar = Tensor::zeros(vec![n, m]);
    let mut x_bar = Tensor::zeros(vec![b, m]);
    for bi in 0..b {
        for i in 0..n {
            let g = y_bar.at2(bi, i);
            let row = &weights[(bi * n + i) * m..(bi * n + i + 1) * m];
            for j in 0..m {
                let contrib = row[j] * g;
                w_bar.data_mut()[i * m + j] += contrib;
                x_bar.data_mut()[bi * m + j] += contrib;
            }
        }
    }
    Ok((w_bar, x_bar))
}

/// Ordinary dense product `Y[b×n] = X[b×m] · W[n×m]ᵀ`.
pub fn linear_matmul<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, m, n) = check_matmul_shapes(x, w)?;
    let mut y = vec![T::zero(); b * n];
    for bi in 0..b {
        let row = x.row(bi);
        for i in 0..n {
            let wrow = w.row(i);
            let mut acc = T::zero();
            for j in 0..m {
                acc += row[j] * wrow[j];
            }
            y[bi * n + i] = acc;
        }
    }
    Tensor::new(vec![b, n], y)
}

/// Transposed-product gradients of [`linear_matmul`]:
/// `X̄ = Ȳ·W`, `W̄ = Ȳᵀ·X`.
pub fn backward_linear<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    y_bar: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (b, m, n) = check_matmul_shapes(x, w)?;
    let mut w_bar = Tensor::zeros(vec![n, m]);
    let mut x_bar = Tensor::zeros(vec![b, m]);
    for bi in 0..b {
        for i in 0..n {
            let g = y_bar.at2(bi, i);
            if g == T::zero() {
                continue;
            }
            for j in 0..m {
                x_bar.data_mut()[bi * m + j] += g * w.at2(i, j);
                w_bar.data_mut()[i * m + j] += g * x.at2(bi, j);
            }
        }
    }
    Ok((w_bar, x_bar))
}
