//! Differentiable tensor operations.
//!
//! Shape errors are programming errors and panic with a descriptive message;
//! model-level entry points validate external input and return typed errors
//! before reaching these ops. Matrix products go through `ndarray` for a
//! cache-friendly kernel; everything else is plain loops.

use ndarray::{ArrayView2, ArrayViewMut2};

use super::scalar::Real;
use super::tensor::{numel_of, BackwardCtx, Tensor};

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, op: &str) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

fn matmul_into<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    let a = ArrayView2::from_shape((m, k), a).unwrap();
    let b = ArrayView2::from_shape((k, n), b).unwrap();
    let mut o = ArrayViewMut2::from_shape((m, n), out).unwrap();
    ndarray::linalg::general_mat_mul(T::ONE, &a, &b, T::ZERO, &mut o);
}

/// out += a^T(k x m) . b(k x n), accumulating into `out` (m x n).
fn matmul_at_b_acc<T: Real>(k: usize, m: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    let a = ArrayView2::from_shape((k, m), a).unwrap();
    let b = ArrayView2::from_shape((k, n), b).unwrap();
    let mut o = ArrayViewMut2::from_shape((m, n), out).unwrap();
    ndarray::linalg::general_mat_mul(T::ONE, &a.t(), &b, T::ONE, &mut o);
}

/// out += a(m x k) . b^T(n x k), accumulating into `out` (m x n).
fn matmul_a_bt_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    let a = ArrayView2::from_shape((m, k), a).unwrap();
    let b = ArrayView2::from_shape((n, k), b).unwrap();
    let mut o = ArrayViewMut2::from_shape((m, n), out).unwrap();
    ndarray::linalg::general_mat_mul(T::ONE, &a, &b.t(), T::ONE, &mut o);
}

fn unary<T: Real>(
    x: &Tensor<T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Tensor<T> {
    let data: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |ctx: &BackwardCtx<'_, T>| {
            let xd = ctx.parents[0].data();
            let delta: Vec<T> = ctx
                .grad_out
                .iter()
                .zip(xd.iter().zip(ctx.out_data))
                .map(|(&g, (&xi, &yi))| g * df(xi, yi))
                .collect();
            drop(xd);
            ctx.parents[0].accumulate_grad(&delta);
        }),
    )
}

impl<T: Real> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Tensor<T> {
        same_shape(self, other, "add");
        let data: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                ctx.parents[0].accumulate_grad(ctx.grad_out);
                ctx.parents[1].accumulate_grad(ctx.grad_out);
            }),
        )
    }

    pub fn sub(&self, other: &Tensor<T>) -> Tensor<T> {
        same_shape(self, other, "sub");
        let data: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                ctx.parents[0].accumulate_grad(ctx.grad_out);
                let neg: Vec<T> = ctx.grad_out.iter().map(|&g| -g).collect();
                ctx.parents[1].accumulate_grad(&neg);
            }),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<T>) -> Tensor<T> {
        same_shape(self, other, "mul");
        let data: Vec<T> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|ctx| {
                let a = ctx.parents[0].data().clone();
                let b = ctx.parents[1].data().clone();
                let da: Vec<T> = ctx.grad_out.iter().zip(&b).map(|(&g, &bi)| g * bi).collect();
                let db: Vec<T> = ctx.grad_out.iter().zip(&a).map(|(&g, &ai)| g * ai).collect();
                ctx.parents[0].accumulate_grad(&da);
                ctx.parents[1].accumulate_grad(&db);
            }),
        )
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        unary(self, move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        unary(self, move |x| x + c, |_, _| T::ONE)
    }

    pub fn neg_t(&self) -> Tensor<T> {
        self.scale(-T::ONE)
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            self,
            |x| if x > T::ZERO { x } else { T::ZERO },
            |x, _| if x > T::ZERO { T::ONE } else { T::ZERO },
        )
    }

    /// ELU with alpha = 1.
    pub fn elu(&self) -> Tensor<T> {
        unary(
            self,
            |x| if x > T::ZERO { x } else { x.exp() - T::ONE },
            |x, y| if x > T::ZERO { T::ONE } else { y + T::ONE },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        unary(
            self,
            |x| sigmoid_scalar(x),
            |_, y| y * (T::ONE - y),
        )
    }

    /// Numerically stable ln(1 + e^x).
    pub fn softplus(&self) -> Tensor<T> {
        unary(
            self,
            |x| softplus_scalar(x),
            |x, _| sigmoid_scalar(x),
        )
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&self) -> Tensor<T> {
        let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
        let a = T::from_f64(0.044715);
        let half = T::from_f64(0.5);
        let three = T::from_f64(3.0);
        unary(
            self,
            move |x| {
                let u = c * (x + a * x.powi(3));
                half * x * (T::ONE + u.tanh())
            },
            move |x, _| {
                let u = c * (x + a * x.powi(3));
                let t = u.tanh();
                let sech2 = T::ONE - t * t;
                half * (T::ONE + t) + half * x * sech2 * c * (T::ONE + three * a * x * x)
            },
        )
    }

    /// Inverted dropout: zeroed entries drop out, survivors scale by 1/(1-p).
    /// The mask must come from the caller so training stays reproducible.
    pub fn dropout(&self, p: f64, rng: &mut impl rand::Rng) -> Tensor<T> {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0,1)");
        if p == 0.0 {
            return self.clone();
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.numel())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::ZERO
                } else {
                    keep
                }
            })
            .collect();
        let data: Vec<T> = self
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let delta: Vec<T> = ctx
                    .grad_out
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| g * m)
                    .collect();
                ctx.parents[0].accumulate_grad(&delta);
            }),
        )
    }

    /// Adds `y` broadcast over the leading axes of `self`; `y.shape()` must
    /// be a suffix of `self.shape()`. Covers bias terms and positional
    /// embeddings.
    pub fn add_broadcast(&self, y: &Tensor<T>) -> Tensor<T> {
        let xs = self.shape();
        let ys = y.shape();
        assert!(
            ys.len() <= xs.len() && xs[xs.len() - ys.len()..] == *ys,
            "add_broadcast: {:?} is not a suffix of {:?}",
            ys,
            xs
        );
        let inner = numel_of(ys);
        let outer = self.numel() / inner.max(1);
        let yd = y.to_vec();
        let data: Vec<T> = self
            .data()
            .chunks(inner)
            .flat_map(|chunk| chunk.iter().zip(&yd).map(|(&a, &b)| a + b).collect::<Vec<_>>())
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), y.clone()],
            Box::new(move |ctx| {
                ctx.parents[0].accumulate_grad(ctx.grad_out);
                let mut dy = vec![T::ZERO; inner];
                for o in 0..outer {
                    for i in 0..inner {
                        dy[i] += ctx.grad_out[o * inner + i];
                    }
                }
                ctx.parents[1].accumulate_grad(&dy);
            }),
        )
    }

    /// 2-D matrix product `[m x k] . [k x n]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape().len(), 2, "matmul: lhs must be 2-D");
        assert_eq!(other.shape().len(), 2, "matmul: rhs must be 2-D");
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = vec![T::ZERO; m * n];
        matmul_into(m, k, n, &self.data(), &other.data(), &mut out);
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx| {
                let a = ctx.parents[0].data().clone();
                let b = ctx.parents[1].data().clone();
                // da += g . b^T ; db += a^T . g
                let mut da = vec![T::ZERO; m * k];
                matmul_a_bt_acc(m, n, k, ctx.grad_out, &b, &mut da);
                let mut db = vec![T::ZERO; k * n];
                matmul_at_b_acc(m, k, n, &a, ctx.grad_out, &mut db);
                ctx.parents[0].accumulate_grad(&da);
                ctx.parents[1].accumulate_grad(&db);
            }),
        )
    }

    /// Batched matrix product `[B x m x k] . [B x k x n]`.
    pub fn bmm(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape().len(), 3, "bmm: lhs must be 3-D");
        assert_eq!(other.shape().len(), 3, "bmm: rhs must be 3-D");
        let (bs, m, k) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (bs2, k2, n) = (other.shape()[0], other.shape()[1], other.shape()[2]);
        assert_eq!(bs, bs2, "bmm: batch dims {bs} vs {bs2}");
        assert_eq!(k, k2, "bmm: inner dims {k} vs {k2}");
        let mut out = vec![T::ZERO; bs * m * n];
        {
            let a = self.data();
            let b = other.data();
            for i in 0..bs {
                matmul_into(
                    m,
                    k,
                    n,
                    &a[i * m * k..(i + 1) * m * k],
                    &b[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        Tensor::from_op(
            vec![bs, m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |ctx| {
                let a = ctx.parents[0].data().clone();
                let b = ctx.parents[1].data().clone();
                let mut da = vec![T::ZERO; bs * m * k];
                let mut db = vec![T::ZERO; bs * k * n];
                for i in 0..bs {
                    let g = &ctx.grad_out[i * m * n..(i + 1) * m * n];
                    matmul_a_bt_acc(m, n, k, g, &b[i * k * n..(i + 1) * k * n], &mut da[i * m * k..(i + 1) * m * k]);
                    matmul_at_b_acc(m, k, n, &a[i * m * k..(i + 1) * m * k], g, &mut db[i * k * n..(i + 1) * k * n]);
                }
                ctx.parents[0].accumulate_grad(&da);
                ctx.parents[1].accumulate_grad(&db);
            }),
        )
    }

    /// Same data, new shape. `product(shape)` must equal `numel()`.
    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        assert_eq!(
            numel_of(shape),
            self.numel(),
            "reshape: {:?} incompatible with {:?}",
            shape,
            self.shape()
        );
        Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|ctx| ctx.parents[0].accumulate_grad(ctx.grad_out)),
        )
    }

    /// Axis permutation with materialized copy.
    pub fn permute(&self, axes: &[usize]) -> Tensor<T> {
        let nd = self.shape().len();
        assert_eq!(axes.len(), nd, "permute: axes length");
        let mut seen = vec![false; nd];
        for &a in axes {
            assert!(a < nd && !seen[a], "permute: invalid axes {:?}", axes);
            seen[a] = true;
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let in_strides = row_major_strides(&in_shape);
        let out_strides = row_major_strides(&out_shape);
        let n = self.numel();
        // out linear index -> input linear index
        let mut mapping = vec![0usize; n];
        for (oi, slot) in mapping.iter_mut().enumerate() {
            let mut rem = oi;
            let mut ii = 0;
            for d in 0..nd {
                let coord = rem / out_strides[d];
                rem %= out_strides[d];
                ii += coord * in_strides[axes[d]];
            }
            *slot = ii;
        }
        let src = self.data();
        let data: Vec<T> = mapping.iter().map(|&ii| src[ii]).collect();
        drop(src);
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![T::ZERO; n];
                for (oi, &ii) in mapping.iter().enumerate() {
                    dx[ii] += ctx.grad_out[oi];
                }
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor<T> {
        let shape = self.shape();
        assert!(axis < shape.len(), "narrow: axis {axis} out of range");
        assert!(
            start + len <= shape[axis],
            "narrow: range {start}..{} exceeds axis size {}",
            start + len,
            shape[axis]
        );
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let axis_len = shape[axis];
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * axis_len * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        drop(src);
        let total = self.numel();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![T::ZERO; total];
                for o in 0..outer {
                    let dst = o * axis_len * inner + start * inner;
                    let srcb = o * len * inner;
                    for i in 0..len * inner {
                        dx[dst + i] += ctx.grad_out[srcb + i];
                    }
                }
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Concatenation along `axis`; all parts must agree on every other axis.
    pub fn concat(axis: usize, parts: &[Tensor<T>]) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat: no inputs");
        let first = parts[0].shape().to_vec();
        assert!(axis < first.len(), "concat: axis {axis} out of range");
        let mut axis_total = 0;
        for p in parts {
            assert_eq!(p.shape().len(), first.len(), "concat: rank mismatch");
            for (d, (&a, &b)) in first.iter().zip(p.shape()).enumerate() {
                if d != axis {
                    assert_eq!(a, b, "concat: shape mismatch on axis {d}");
                }
            }
            axis_total += p.shape()[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let mut data = vec![T::ZERO; outer * axis_total * inner];
        let mut offset = 0;
        let part_lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        for (p, &plen) in parts.iter().zip(&part_lens) {
            let src = p.data();
            for o in 0..outer {
                let dst = o * axis_total * inner + offset * inner;
                let sb = o * plen * inner;
                data[dst..dst + plen * inner].copy_from_slice(&src[sb..sb + plen * inner]);
            }
            offset += plen;
        }
        Tensor::from_op(
            out_shape,
            data,
            parts.to_vec(),
            Box::new(move |ctx| {
                let mut offset = 0;
                for (pi, &plen) in part_lens.iter().enumerate() {
                    let mut dp = vec![T::ZERO; outer * plen * inner];
                    for o in 0..outer {
                        let src = o * axis_total * inner + offset * inner;
                        let db = o * plen * inner;
                        dp[db..db + plen * inner]
                            .copy_from_slice(&ctx.grad_out[src..src + plen * inner]);
                    }
                    ctx.parents[pi].accumulate_grad(&dp);
                    offset += plen;
                }
            }),
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Tensor<T> {
        let d = *self.shape().last().expect("softmax: rank >= 1");
        assert!(d > 0);
        let mut data = self.to_vec();
        for row in data.chunks_mut(d) {
            let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max_val(b));
            let mut sum = T::ZERO;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![T::ZERO; ctx.grad_out.len()];
                for (r, (grow, yrow)) in ctx
                    .grad_out
                    .chunks(d)
                    .zip(ctx.out_data.chunks(d))
                    .enumerate()
                {
                    let dot: T = grow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
                    for i in 0..d {
                        dx[r * d + i] = yrow[i] * (grow[i] - dot);
                    }
                }
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    pub fn sum_all(&self) -> Tensor<T> {
        let s: T = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |ctx| {
                let delta = vec![ctx.grad_out[0]; n];
                ctx.parents[0].accumulate_grad(&delta);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = self.numel();
        self.sum_all().scale(T::from_f64(1.0 / n as f64))
    }

    /// Max over non-overlapping windows of `pool` along the frequency axis of
    /// a `[C, F, T]` tensor. A ragged tail is padded with -inf, i.e. the tail
    /// window takes the max of what remains.
    pub fn max_pool_freq(&self, pool: usize) -> Tensor<T> {
        assert_eq!(self.shape().len(), 3, "max_pool_freq: expects [C, F, T]");
        assert!(pool >= 1);
        let (c, f, t) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let fo = f.div_ceil(pool);
        let src = self.data();
        let mut data = vec![T::ZERO; c * fo * t];
        let mut argmax = vec![0usize; c * fo * t];
        for ci in 0..c {
            for fi in 0..fo {
                for ti in 0..t {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0;
                    for w in 0..pool {
                        let fsrc = fi * pool + w;
                        if fsrc >= f {
                            break;
                        }
                        let idx = ci * f * t + fsrc * t + ti;
                        if src[idx] > best {
                            best = src[idx];
                            best_idx = idx;
                        }
                    }
                    let o = ci * fo * t + fi * t + ti;
                    data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        drop(src);
        let total = self.numel();
        Tensor::from_op(
            vec![c, fo, t],
            data,
            vec![self.clone()],
            Box::new(move |ctx| {
                let mut dx = vec![T::ZERO; total];
                for (o, &src_idx) in argmax.iter().enumerate() {
                    dx[src_idx] += ctx.grad_out[o];
                }
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }
}

pub(crate) fn sigmoid_scalar<T: Real>(x: T) -> T {
    // tanh form is stable for large |x|
    T::from_f64(0.5) * (T::ONE + (T::from_f64(0.5) * x).tanh())
}

pub(crate) fn softplus_scalar<T: Real>(x: T) -> T {
    x.max_val(T::ZERO) + (T::ONE + (-x.abs()).exp()).ln()
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}
