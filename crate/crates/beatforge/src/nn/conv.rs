//! Convolutions via im2col + matrix product.
//!
//! Lowering to a matmul keeps the inner loops inside the `ndarray` kernel,
//! which is what makes CPU training of the toy configurations practical.

use super::scalar::Real;
use super::tensor::{BackwardCtx, Tensor};

/// col[(ci*k + kk), t] = x[ci, t + kk*dil - left], zero outside.
fn im2col_1d<T: Real>(x: &[T], cin: usize, len: usize, k: usize, dil: usize, left: usize) -> Vec<T> {
    let mut col = vec![T::ZERO; cin * k * len];
    for ci in 0..cin {
        for kk in 0..k {
            let row = (ci * k + kk) * len;
            let shift = kk * dil;
            for t in 0..len {
                let src = t + shift;
                if src >= left && src - left < len {
                    col[row + t] = x[ci * len + (src - left)];
                }
            }
        }
    }
    col
}

fn col2im_1d<T: Real>(
    dcol: &[T],
    cin: usize,
    len: usize,
    k: usize,
    dil: usize,
    left: usize,
) -> Vec<T> {
    let mut dx = vec![T::ZERO; cin * len];
    for ci in 0..cin {
        for kk in 0..k {
            let row = (ci * k + kk) * len;
            let shift = kk * dil;
            for t in 0..len {
                let src = t + shift;
                if src >= left && src - left < len {
                    dx[ci * len + (src - left)] += dcol[row + t];
                }
            }
        }
    }
    dx
}

/// col[(ci*kf*kt + i*kt + j), (fo*t_out + to)] = x[ci, fo*sf + i - pf, to*st + j - pt].
#[allow(clippy::too_many_arguments)]
fn im2col_2d<T: Real>(
    x: &[T],
    cin: usize,
    f: usize,
    t: usize,
    kf: usize,
    kt: usize,
    sf: usize,
    st: usize,
    pf: usize,
    pt: usize,
    fo: usize,
    to: usize,
) -> Vec<T> {
    let mut col = vec![T::ZERO; cin * kf * kt * fo * to];
    for ci in 0..cin {
        for i in 0..kf {
            for j in 0..kt {
                let row = ((ci * kf + i) * kt + j) * fo * to;
                for fi in 0..fo {
                    let fsrc = fi * sf + i;
                    if fsrc < pf || fsrc - pf >= f {
                        continue;
                    }
                    let xin = (ci * f + (fsrc - pf)) * t;
                    for ti in 0..to {
                        let tsrc = ti * st + j;
                        if tsrc < pt || tsrc - pt >= t {
                            continue;
                        }
                        col[row + fi * to + ti] = x[xin + (tsrc - pt)];
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im_2d<T: Real>(
    dcol: &[T],
    cin: usize,
    f: usize,
    t: usize,
    kf: usize,
    kt: usize,
    sf: usize,
    st: usize,
    pf: usize,
    pt: usize,
    fo: usize,
    to: usize,
) -> Vec<T> {
    let mut dx = vec![T::ZERO; cin * f * t];
    for ci in 0..cin {
        for i in 0..kf {
            for j in 0..kt {
                let row = ((ci * kf + i) * kt + j) * fo * to;
                for fi in 0..fo {
                    let fsrc = fi * sf + i;
                    if fsrc < pf || fsrc - pf >= f {
                        continue;
                    }
                    let xin = (ci * f + (fsrc - pf)) * t;
                    for ti in 0..to {
                        let tsrc = ti * st + j;
                        if tsrc < pt || tsrc - pt >= t {
                            continue;
                        }
                        dx[xin + (tsrc - pt)] += dcol[row + fi * to + ti];
                    }
                }
            }
        }
    }
    dx
}

fn matmul_plain<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    let a = ndarray::ArrayView2::from_shape((m, k), a).unwrap();
    let b = ndarray::ArrayView2::from_shape((k, n), b).unwrap();
    let mut o = ndarray::ArrayViewMut2::from_shape((m, n), &mut out).unwrap();
    ndarray::linalg::general_mat_mul(T::ONE, &a, &b, T::ZERO, &mut o);
    out
}

fn matmul_at_b<T: Real>(k: usize, m: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    let a = ndarray::ArrayView2::from_shape((k, m), a).unwrap();
    let b = ndarray::ArrayView2::from_shape((k, n), b).unwrap();
    let mut o = ndarray::ArrayViewMut2::from_shape((m, n), &mut out).unwrap();
    ndarray::linalg::general_mat_mul(T::ONE, &a.t(), &b, T::ZERO, &mut o);
    out
}

fn matmul_a_bt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; m * n];
    let a = ndarray::ArrayView2::from_shape((m, k), a).unwrap();
    let b = ndarray::ArrayView2::from_shape((n, k), b).unwrap();
    let mut o = ndarray::ArrayViewMut2::from_shape((m, n), &mut out).unwrap();
    ndarray::linalg::general_mat_mul(T::ONE, &a, &b.t(), T::ONE, &mut o);
    out
}

impl<T: Real> Tensor<T> {
    /// Dilated 1-D convolution with same-length output.
    ///
    /// `self` is `[C_in, L]`, `weight` is `[C_out, C_in, K]`, `bias` is
    /// `[C_out]`. Zero padding of `(K-1)*dilation/2` on each side keeps the
    /// output length at `L` for odd `K`.
    pub fn conv1d(&self, weight: &Tensor<T>, bias: &Tensor<T>, dilation: usize) -> Tensor<T> {
        assert_eq!(self.shape().len(), 2, "conv1d: input must be [C_in, L]");
        assert_eq!(weight.shape().len(), 3, "conv1d: weight must be [C_out, C_in, K]");
        let (cin, len) = (self.shape()[0], self.shape()[1]);
        let (cout, wcin, k) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
        assert_eq!(cin, wcin, "conv1d: channel mismatch {cin} vs {wcin}");
        assert_eq!(bias.shape(), &[cout], "conv1d: bias must be [C_out]");
        assert!(k % 2 == 1, "conv1d: same-padding requires odd kernel, got {k}");
        assert!(dilation >= 1);
        let left = (k - 1) * dilation / 2;

        let col = im2col_1d(&self.data(), cin, len, k, dilation, left);
        let mut out = matmul_plain(cout, cin * k, len, &weight.data(), &col);
        {
            let b = bias.data();
            for co in 0..cout {
                for v in &mut out[co * len..(co + 1) * len] {
                    *v += b[co];
                }
            }
        }
        Tensor::from_op(
            vec![cout, len],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let x = ctx.parents[0].data().clone();
                let w = ctx.parents[1].data().clone();
                let col = im2col_1d(&x, cin, len, k, dilation, left);
                // dW = g . col^T, flattened as [C_out, C_in*K]
                let dw = matmul_a_bt(cout, len, cin * k, ctx.grad_out, &col);
                let mut db = vec![T::ZERO; cout];
                for co in 0..cout {
                    db[co] = ctx.grad_out[co * len..(co + 1) * len].iter().copied().sum();
                }
                let dcol = matmul_at_b(cout, cin * k, len, &w, ctx.grad_out);
                let dx = col2im_1d(&dcol, cin, len, k, dilation, left);
                ctx.parents[0].accumulate_grad(&dx);
                ctx.parents[1].accumulate_grad(&dw);
                ctx.parents[2].accumulate_grad(&db);
            }),
        )
    }

    /// 2-D convolution over `[C_in, F, T]` with explicit stride and padding.
    ///
    /// `weight` is `[C_out, C_in, K_f, K_t]`; output is `[C_out, F_out, T_out]`
    /// with `F_out = (F + 2*pad_f - K_f)/stride_f + 1` (floor) and likewise
    /// for time.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Tensor<T> {
        assert_eq!(self.shape().len(), 3, "conv2d: input must be [C_in, F, T]");
        assert_eq!(weight.shape().len(), 4, "conv2d: weight must be [C_out, C_in, K_f, K_t]");
        let (cin, f, t) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, wcin, kf, kt) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        assert_eq!(cin, wcin, "conv2d: channel mismatch {cin} vs {wcin}");
        assert_eq!(bias.shape(), &[cout], "conv2d: bias must be [C_out]");
        let (sf, st) = stride;
        let (pf, pt) = pad;
        assert!(sf >= 1 && st >= 1);
        assert!(
            f + 2 * pf >= kf && t + 2 * pt >= kt,
            "conv2d: kernel ({kf},{kt}) larger than padded input ({},{})",
            f + 2 * pf,
            t + 2 * pt
        );
        let fo = (f + 2 * pf - kf) / sf + 1;
        let to = (t + 2 * pt - kt) / st + 1;

        let col = im2col_2d(&self.data(), cin, f, t, kf, kt, sf, st, pf, pt, fo, to);
        let mut out = matmul_plain(cout, cin * kf * kt, fo * to, &weight.data(), &col);
        {
            let b = bias.data();
            for co in 0..cout {
                for v in &mut out[co * fo * to..(co + 1) * fo * to] {
                    *v += b[co];
                }
            }
        }
        Tensor::from_op(
            vec![cout, fo, to],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let x = ctx.parents[0].data().clone();
                let w = ctx.parents[1].data().clone();
                let col = im2col_2d(&x, cin, f, t, kf, kt, sf, st, pf, pt, fo, to);
                let dw = matmul_a_bt(cout, fo * to, cin * kf * kt, ctx.grad_out, &col);
                let mut db = vec![T::ZERO; cout];
                for co in 0..cout {
                    db[co] = ctx.grad_out[co * fo * to..(co + 1) * fo * to]
                        .iter()
                        .copied()
                        .sum();
                }
                let dcol = matmul_at_b(cout, cin * kf * kt, fo * to, &w, ctx.grad_out);
                let dx = col2im_2d(&dcol, cin, f, t, kf, kt, sf, st, pf, pt, fo, to);
                ctx.parents[0].accumulate_grad(&dx);
                ctx.parents[1].accumulate_grad(&dw);
                ctx.parents[2].accumulate_grad(&db);
            }),
        )
    }
}
