//! Multi-head scaled dot-product attention.

use rand::Rng;

use super::linear::Linear;
use super::params::ParamSet;
use super::scalar::Real;
use super::tensor::Tensor;

pub struct MultiHeadAttention<T: Real = f32> {
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub d_model: usize,
    pub n_heads: usize,
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn new(d_model: usize, n_heads: usize, rng: &mut impl Rng) -> Self {
        assert!(
            d_model % n_heads == 0,
            "d_model {d_model} not divisible by n_heads {n_heads}"
        );
        Self {
            wq: Linear::new(d_model, d_model, true, rng),
            wk: Linear::new(d_model, d_model, true, rng),
            wv: Linear::new(d_model, d_model, true, rng),
            wo: Linear::new(d_model, d_model, true, rng),
            d_model,
            n_heads,
        }
    }

    /// Self-attention over `[B, S, d_model]`. Returns the output and the
    /// attention weights `[B, H, S, S]` (rows sum to one), which the models
    /// keep for inspection/export.
    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        assert_eq!(x.shape().len(), 3, "attention: input must be [B, S, d]");
        let (b, s, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        assert_eq!(d, self.d_model, "attention: d_model mismatch");
        let h = self.n_heads;
        let dh = d / h;

        // [B, S, d] -> [B*H, S, dh]
        let split = |t: &Tensor<T>| -> Tensor<T> {
            t.reshape(&[b, s, h, dh])
                .permute(&[0, 2, 1, 3])
                .reshape(&[b * h, s, dh])
        };
        let q = split(&self.wq.forward(x));
        let k = split(&self.wk.forward(x));
        let v = split(&self.wv.forward(x));

        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let scores = q.bmm(&k.permute(&[0, 2, 1])).scale(scale); // [B*H, S, S]
        let attn = scores.softmax();
        let ctx = attn.bmm(&v); // [B*H, S, dh]

        let merged = ctx
            .reshape(&[b, h, s, dh])
            .permute(&[0, 2, 1, 3])
            .reshape(&[b, s, d]);
        let out = self.wo.forward(&merged);
        (out, attn.reshape(&[b, h, s, s]))
    }

    pub fn register(&self, prefix: &str, ps: &mut ParamSet<T>) {
        self.wq.register(&format!("{prefix}.wq"), ps);
        self.wk.register(&format!("{prefix}.wk"), ps);
        self.wv.register(&format!("{prefix}.wv"), ps);
        self.wo.register(&format!("{prefix}.wo"), ps);
    }

    pub fn param_count(&self) -> usize {
        self.wq.param_count()
            + self.wk.param_count()
            + self.wv.param_count()
            + self.wo.param_count()
    }
}
