//! Pre-norm transformer encoder layer.

use rand::{Rng, RngCore};

use super::attention::MultiHeadAttention;
use super::linear::Linear;
use super::norm::layer_norm;
use super::params::ParamSet;
use super::scalar::Real;
use super::tensor::Tensor;

/// Forward-pass mode. Training mode carries the RNG that drives dropout;
/// eval mode disables dropout and (in the models) switches batch norm to
/// running statistics.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut dyn RngCore },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

const LN_EPS: f64 = 1e-5;

/// One pre-norm encoder layer:
/// `x + Drop(MHA(LN(x)))` then `y + Drop(FFN(LN(y)))`,
/// FFN = Linear(d, mult*d) -> GELU -> Linear(mult*d, d).
pub struct EncoderLayer<T: Real = f32> {
    pub attn: MultiHeadAttention<T>,
    pub ln1_g: Tensor<T>,
    pub ln1_b: Tensor<T>,
    pub ln2_g: Tensor<T>,
    pub ln2_b: Tensor<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
    pub dropout: f64,
}

impl<T: Real> EncoderLayer<T> {
    pub fn new(d_model: usize, n_heads: usize, ffn_mult: usize, dropout: f64, rng: &mut impl Rng) -> Self {
        Self {
            attn: MultiHeadAttention::new(d_model, n_heads, rng),
            ln1_g: Tensor::ones(&[d_model]).requires_grad(),
            ln1_b: Tensor::zeros(&[d_model]).requires_grad(),
            ln2_g: Tensor::ones(&[d_model]).requires_grad(),
            ln2_b: Tensor::zeros(&[d_model]).requires_grad(),
            ff1: Linear::new(d_model, ffn_mult * d_model, true, rng),
            ff2: Linear::new(ffn_mult * d_model, d_model, true, rng),
            dropout,
        }
    }

    /// Input/output `[B, S, d_model]`; also returns attention `[B, H, S, S]`.
    pub fn forward(&self, x: &Tensor<T>, mode: &mut Mode<'_>) -> (Tensor<T>, Tensor<T>) {
        let eps = T::from_f64(LN_EPS);
        let h = layer_norm(x, &self.ln1_g, &self.ln1_b, eps);
        let (a, attn) = self.attn.forward(&h);
        let a = self.drop(a, mode);
        let y = x.add(&a);

        let h2 = layer_norm(&y, &self.ln2_g, &self.ln2_b, eps);
        let f = self.ff2.forward(&self.ff1.forward(&h2).gelu());
        let f = self.drop(f, mode);
        (y.add(&f), attn)
    }

    fn drop(&self, t: Tensor<T>, mode: &mut Mode<'_>) -> Tensor<T> {
        match mode {
            Mode::Train { rng } if self.dropout > 0.0 => t.dropout(self.dropout, rng),
            _ => t,
        }
    }

    pub fn register(&self, prefix: &str, ps: &mut ParamSet<T>) {
        self.attn.register(&format!("{prefix}.attn"), ps);
        ps.push(format!("{prefix}.ln1.g"), self.ln1_g.clone());
        ps.push(format!("{prefix}.ln1.b"), self.ln1_b.clone());
        ps.push(format!("{prefix}.ln2.g"), self.ln2_g.clone());
        ps.push(format!("{prefix}.ln2.b"), self.ln2_b.clone());
        self.ff1.register(&format!("{prefix}.ff1"), ps);
        self.ff2.register(&format!("{prefix}.ff2"), ps);
    }

    pub fn param_count(&self) -> usize {
        self.attn.param_count()
            + self.ln1_g.numel() * 2
            + self.ln2_g.numel() * 2
            + self.ff1.param_count()
            + self.ff2.param_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_param_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = EncoderLayer::<f64>::new(16, 4, 4, 0.0, &mut rng);
        // MHA: 4 * (16*16 + 16); LN: 4*16; FFN: 16*64+64 + 64*16+16
        let want = 4 * (256 + 16) + 64 + (1024 + 64) + (1024 + 16);
        assert_eq!(layer.param_count(), want);

        let x = Tensor::from_vec(&[2, 3, 16], (0..96).map(|i| (i as f64).cos()).collect());
        let (y, attn) = layer.forward(&x, &mut Mode::Eval);
        assert_eq!(y.shape(), &[2, 3, 16]);
        assert_eq!(attn.shape(), &[2, 4, 3, 3]);
    }

    #[test]
    fn eval_mode_is_deterministic_train_dropout_is_not_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = EncoderLayer::<f64>::new(8, 2, 2, 0.5, &mut rng);
        let x = Tensor::from_vec(&[1, 4, 8], (0..32).map(|i| (i as f64) * 0.01).collect());
        let (a, _) = layer.forward(&x, &mut Mode::Eval);
        let (b, _) = layer.forward(&x, &mut Mode::Eval);
        assert_eq!(a.to_vec(), b.to_vec());

        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let (c, _) = layer.forward(&x, &mut Mode::Train { rng: &mut rng2 });
        assert_ne!(a.to_vec(), c.to_vec());
    }
}
