//! Dense layer over the last axis.

use rand::Rng;

use super::init::glorot_uniform;
use super::params::ParamSet;
use super::scalar::Real;
use super::tensor::Tensor;

/// `y = x . w + b` applied to the last axis; `w` is stored `[in, out]`.
pub struct Linear<T: Real = f32> {
    pub w: Tensor<T>,
    pub b: Option<Tensor<T>>,
    pub d_in: usize,
    pub d_out: usize,
}

impl<T: Real> Linear<T> {
    pub fn new(d_in: usize, d_out: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let w = glorot_uniform::<T>(&[d_in, d_out], d_in, d_out, rng).requires_grad();
        let b = bias.then(|| Tensor::zeros(&[d_out]).requires_grad());
        Self { w, b, d_in, d_out }
    }

    /// Accepts any shape `[..., d_in]` and returns `[..., d_out]`.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let shape = x.shape().to_vec();
        assert_eq!(
            *shape.last().expect("linear: rank >= 1"),
            self.d_in,
            "linear: input last axis {:?} != {}",
            shape,
            self.d_in
        );
        let rows = x.numel() / self.d_in;
        let mut out = x.reshape(&[rows, self.d_in]).matmul(&self.w);
        if let Some(b) = &self.b {
            out = out.add_broadcast(b);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.d_out;
        out.reshape(&out_shape)
    }

    pub fn register(&self, prefix: &str, ps: &mut ParamSet<T>) {
        ps.push(format!("{prefix}.w"), self.w.clone());
        if let Some(b) = &self.b {
            ps.push(format!("{prefix}.b"), b.clone());
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.numel() + self.b.as_ref().map_or(0, |b| b.numel())
    }
}
