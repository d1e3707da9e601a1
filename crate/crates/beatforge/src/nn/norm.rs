//! Layer and batch normalization.

use super::scalar::Real;
use super::tensor::{BackwardCtx, Tensor};

/// Normalizes the last axis of `x` to zero mean / unit variance per row,
/// then applies the learned affine `gamma * xhat + beta`.
///
/// `gamma` and `beta` are `[d]` where `d` is the last-axis length. Variance
/// is the population variance (divide by `d`).
pub fn layer_norm<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Tensor<T> {
    let d = *x.shape().last().expect("layer_norm: rank >= 1");
    assert_eq!(gamma.shape(), &[d], "layer_norm: gamma must be [{d}]");
    assert_eq!(beta.shape(), &[d], "layer_norm: beta must be [{d}]");
    let rows = x.numel() / d;

    let mut data = vec![T::ZERO; x.numel()];
    {
        let xd = x.data();
        let g = gamma.data();
        let b = beta.data();
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let (mu, var) = row_stats(row);
            let inv = T::ONE / (var + eps).sqrt();
            for i in 0..d {
                data[r * d + i] = g[i] * ((row[i] - mu) * inv) + b[i];
            }
        }
    }
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let xd = ctx.parents[0].data().clone();
            let g = ctx.parents[1].data().clone();
            let mut dx = vec![T::ZERO; xd.len()];
            let mut dg = vec![T::ZERO; d];
            let mut db = vec![T::ZERO; d];
            let dn = T::from_f64(d as f64);
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let grow = &ctx.grad_out[r * d..(r + 1) * d];
                let (mu, var) = row_stats(row);
                let inv = T::ONE / (var + eps).sqrt();
                // accumulate affine grads and the two row-level sums
                let mut sum_dxhat = T::ZERO;
                let mut sum_dxhat_xhat = T::ZERO;
                for i in 0..d {
                    let xhat = (row[i] - mu) * inv;
                    dg[i] += grow[i] * xhat;
                    db[i] += grow[i];
                    let dxhat = grow[i] * g[i];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                for i in 0..d {
                    let xhat = (row[i] - mu) * inv;
                    let dxhat = grow[i] * g[i];
                    dx[r * d + i] =
                        inv * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                }
            }
            ctx.parents[0].accumulate_grad(&dx);
            ctx.parents[1].accumulate_grad(&dg);
            ctx.parents[2].accumulate_grad(&db);
        }),
    )
}

/// Per-channel statistics used by batch norm over a `[C, F, T]` activation.
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Training-mode batch norm over `[C, F, T]`: each channel is normalized by
/// statistics over its F*T entries. Returns the output plus the batch stats
/// so the caller can maintain running averages outside the tape.
pub fn batch_norm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> (Tensor<T>, BatchStats<T>) {
    assert_eq!(x.shape().len(), 3, "batch_norm: expects [C, F, T]");
    let (c, f, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    assert_eq!(gamma.shape(), &[c]);
    assert_eq!(beta.shape(), &[c]);
    let n = f * t;
    assert!(n > 0);

    let mut mean = vec![T::ZERO; c];
    let mut var = vec![T::ZERO; c];
    let mut data = vec![T::ZERO; x.numel()];
    {
        let xd = x.data();
        let g = gamma.data();
        let b = beta.data();
        for ci in 0..c {
            let ch = &xd[ci * n..(ci + 1) * n];
            let (mu, v) = row_stats(ch);
            mean[ci] = mu;
            var[ci] = v;
            let inv = T::ONE / (v + eps).sqrt();
            for i in 0..n {
                data[ci * n + i] = g[ci] * ((ch[i] - mu) * inv) + b[ci];
            }
        }
    }
    let out = Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let xd = ctx.parents[0].data().clone();
            let g = ctx.parents[1].data().clone();
            let mut dx = vec![T::ZERO; xd.len()];
            let mut dg = vec![T::ZERO; c];
            let mut db = vec![T::ZERO; c];
            let dn = T::from_f64(n as f64);
            for ci in 0..c {
                let ch = &xd[ci * n..(ci + 1) * n];
                let grow = &ctx.grad_out[ci * n..(ci + 1) * n];
                let (mu, v) = row_stats(ch);
                let inv = T::ONE / (v + eps).sqrt();
                let mut sum_dxhat = T::ZERO;
                let mut sum_dxhat_xhat = T::ZERO;
                for i in 0..n {
                    let xhat = (ch[i] - mu) * inv;
                    dg[ci] += grow[i] * xhat;
                    db[ci] += grow[i];
                    let dxhat = grow[i] * g[ci];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                for i in 0..n {
                    let xhat = (ch[i] - mu) * inv;
                    let dxhat = grow[i] * g[ci];
                    dx[ci * n + i] =
                        inv * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
                }
            }
            ctx.parents[0].accumulate_grad(&dx);
            ctx.parents[1].accumulate_grad(&dg);
            ctx.parents[2].accumulate_grad(&db);
        }),
    );
    (out, BatchStats { mean, var })
}

/// Inference-mode batch norm using frozen running statistics. The statistics
/// are constants, so the gradient only flows to `x`, `gamma`, `beta`.
pub fn batch_norm_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Tensor<T> {
    assert_eq!(x.shape().len(), 3, "batch_norm: expects [C, F, T]");
    let (c, f, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    assert_eq!(gamma.shape(), &[c]);
    assert_eq!(beta.shape(), &[c]);
    assert_eq!(running_mean.len(), c);
    assert_eq!(running_var.len(), c);
    let n = f * t;

    let inv: Vec<T> = running_var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
    let mu = running_mean.to_vec();
    let mut data = vec![T::ZERO; x.numel()];
    {
        let xd = x.data();
        let g = gamma.data();
        let b = beta.data();
        for ci in 0..c {
            for i in 0..n {
                data[ci * n + i] = g[ci] * ((xd[ci * n + i] - mu[ci]) * inv[ci]) + b[ci];
            }
        }
    }
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let xd = ctx.parents[0].data().clone();
            let g = ctx.parents[1].data().clone();
            let mut dx = vec![T::ZERO; xd.len()];
            let mut dg = vec![T::ZERO; c];
            let mut db = vec![T::ZERO; c];
            for ci in 0..c {
                for i in 0..n {
                    let idx = ci * n + i;
                    let xhat = (xd[idx] - mu[ci]) * inv[ci];
                    dx[idx] = ctx.grad_out[idx] * g[ci] * inv[ci];
                    dg[ci] += ctx.grad_out[idx] * xhat;
                    db[ci] += ctx.grad_out[idx];
                }
            }
            ctx.parents[0].accumulate_grad(&dx);
            ctx.parents[1].accumulate_grad(&dg);
            ctx.parents[2].accumulate_grad(&db);
        }),
    )
}

fn row_stats<T: Real>(row: &[T]) -> (T, T) {
    let n = T::from_f64(row.len() as f64);
    let mut mu = T::ZERO;
    for &v in row {
        mu += v;
    }
    mu = mu / n;
    let mut var = T::ZERO;
    for &v in row {
        var += (v - mu) * (v - mu);
    }
    (mu, var / n)
}
