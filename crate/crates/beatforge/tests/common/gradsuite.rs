//! Gradient verification suite shared by the gradient tests and the
//! acceptance gate: every differentiable operation is exercised through a
//! scalar loss and checked against f64 central differences.

use beatforge::nn::norm::{batch_norm_eval, batch_norm_train, layer_norm};
use beatforge::nn::transformer::Mode;
use beatforge::nn::{check_gradients, EncoderLayer, GradCheckReport, Linear, MultiHeadAttention, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values bounded away from zero so kinked activations (relu, elu) and
/// finite differences never straddle the kink.
fn away_from_zero(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn smooth(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.2..1.2)).collect()
}

const H: f64 = 1e-5;

pub fn run_all() -> Vec<(&'static str, GradCheckReport)> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEA7);

    // elementwise add/sub/mul/scale/add_scalar + mean_all
    {
        let a = Tensor::from_vec(&[3, 4], smooth(12, &mut rng)).requires_grad();
        let b = Tensor::from_vec(&[3, 4], smooth(12, &mut rng)).requires_grad();
        let params = vec![("a".into(), a.clone()), ("b".into(), b.clone())];
        let report = check_gradients(
            &params,
            || {
                a.add(&b)
                    .mul(&a.sub(&b))
                    .scale(0.7)
                    .add_scalar(0.3)
                    .mean_all()
            },
            12,
            H,
            1,
        );
        out.push(("elementwise", report));
    }

    // activations: relu, elu, gelu, sigmoid, softplus
    {
        let x = Tensor::from_vec(&[30], away_from_zero(30, &mut rng)).requires_grad();
        let params = vec![("x".into(), x.clone())];
        let report = check_gradients(
            &params,
            || {
                x.relu()
                    .add(&x.elu())
                    .add(&x.gelu())
                    .add(&x.sigmoid())
                    .add(&x.softplus())
                    .mul(&x)
                    .sum_all()
            },
            24,
            H,
            2,
        );
        out.push(("activations", report));
    }

    // matmul chain
    {
        let a = Tensor::from_vec(&[4, 5], smooth(20, &mut rng)).requires_grad();
        let b = Tensor::from_vec(&[5, 3], smooth(15, &mut rng)).requires_grad();
        let c = Tensor::from_vec(&[3, 2], smooth(6, &mut rng)).requires_grad();
        let params = vec![
            ("a".into(), a.clone()),
            ("b".into(), b.clone()),
            ("c".into(), c.clone()),
        ];
        let report = check_gradients(
            &params,
            || {
                let y = a.matmul(&b).matmul(&c);
                y.mul(&y).sum_all()
            },
            8,
            H,
            3,
        );
        out.push(("matmul", report));
    }

    // bmm + permute + reshape
    {
        let a = Tensor::from_vec(&[2, 3, 4], smooth(24, &mut rng)).requires_grad();
        let b = Tensor::from_vec(&[2, 4, 2], smooth(16, &mut rng)).requires_grad();
        let params = vec![("a".into(), a.clone()), ("b".into(), b.clone())];
        let report = check_gradients(
            &params,
            || {
                let y = a.bmm(&b).permute(&[0, 2, 1]).reshape(&[12]);
                y.mul(&y).sum_all()
            },
            12,
            H,
            4,
        );
        out.push(("bmm_permute_reshape", report));
    }

    // narrow + concat + broadcast add
    {
        let x = Tensor::from_vec(&[3, 6], smooth(18, &mut rng)).requires_grad();
        let bias = Tensor::from_vec(&[2], smooth(2, &mut rng)).requires_grad();
        let params = vec![("x".into(), x.clone()), ("bias".into(), bias.clone())];
        let report = check_gradients(
            &params,
            || {
                let left = x.narrow(1, 0, 2);
                let mid = x.narrow(1, 2, 2);
                let y = Tensor::concat(1, &[left, mid]).add_broadcast(&bias);
                y.mul(&y).sum_all()
            },
            18,
            H,
            5,
        );
        out.push(("narrow_concat_broadcast", report));
    }

    // softmax against fixed weights
    {
        let x = Tensor::from_vec(&[4, 5], smooth(20, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[4, 5], smooth(20, &mut rng));
        let params = vec![("x".into(), x.clone())];
        let report = check_gradients(&params, || x.softmax().mul(&w).sum_all(), 20, H, 6);
        out.push(("softmax", report));
    }

    // layer norm
    {
        let x = Tensor::from_vec(&[3, 8], smooth(24, &mut rng)).requires_grad();
        let g = Tensor::from_vec(&[8], away_from_zero(8, &mut rng)).requires_grad();
        let b = Tensor::from_vec(&[8], smooth(8, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[3, 8], smooth(24, &mut rng));
        let params = vec![
            ("x".into(), x.clone()),
            ("g".into(), g.clone()),
            ("b".into(), b.clone()),
        ];
        let report = check_gradients(
            &params,
            || layer_norm(&x, &g, &b, 1e-5).mul(&w).sum_all(),
            8,
            H,
            7,
        );
        out.push(("layer_norm", report));
    }

    // batch norm, training mode
    {
        let x = Tensor::from_vec(&[2, 3, 4], smooth(24, &mut rng)).requires_grad();
        let g = Tensor::from_vec(&[2], away_from_zero(2, &mut rng)).requires_grad();
        let b = Tensor::from_vec(&[2], smooth(2, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[2, 3, 4], smooth(24, &mut rng));
        let params = vec![
            ("x".into(), x.clone()),
            ("g".into(), g.clone()),
            ("b".into(), b.clone()),
        ];
        let report = check_gradients(
            &params,
            || batch_norm_train(&x, &g, &b, 1e-5).0.mul(&w).sum_all(),
            16,
            H,
            8,
        );
        out.push(("batch_norm_train", report));
    }

    // batch norm, eval mode (frozen stats)
    {
        let x = Tensor::from_vec(&[2, 3, 4], smooth(24, &mut rng)).requires_grad();
        let g = Tensor::from_vec(&[2], away_from_zero(2, &mut rng)).requires_grad();
        let b = Tensor::from_vec(&[2], smooth(2, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[2, 3, 4], smooth(24, &mut rng));
        let rm = [0.1, -0.2];
        let rv = [1.3, 0.8];
        let params = vec![
            ("x".into(), x.clone()),
            ("g".into(), g.clone()),
            ("b".into(), b.clone()),
        ];
        let report = check_gradients(
            &params,
            || batch_norm_eval(&x, &g, &b, &rm, &rv, 1e-5).mul(&w).sum_all(),
            16,
            H,
            9,
        );
        out.push(("batch_norm_eval", report));
    }

    // dilated conv1d
    {
        let x = Tensor::from_vec(&[2, 12], smooth(24, &mut rng)).requires_grad();
        let wt = Tensor::from_vec(&[3, 2, 5], smooth(30, &mut rng)).requires_grad();
        let bs = Tensor::from_vec(&[3], smooth(3, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[3, 12], smooth(36, &mut rng));
        let params = vec![
            ("x".into(), x.clone()),
            ("w".into(), wt.clone()),
            ("b".into(), bs.clone()),
        ];
        let report = check_gradients(
            &params,
            || x.conv1d(&wt, &bs, 2).mul(&w).sum_all(),
            10,
            H,
            10,
        );
        out.push(("conv1d_dilated", report));
    }

    // strided, padded conv2d
    {
        let x = Tensor::from_vec(&[2, 6, 7], smooth(84, &mut rng)).requires_grad();
        let wt = Tensor::from_vec(&[3, 2, 3, 3], smooth(54, &mut rng)).requires_grad();
        let bs = Tensor::from_vec(&[3], smooth(3, &mut rng)).requires_grad();
        let params = vec![
            ("x".into(), x.clone()),
            ("w".into(), wt.clone()),
            ("b".into(), bs.clone()),
        ];
        let report = check_gradients(
            &params,
            || {
                let y = x.conv2d(&wt, &bs, (2, 1), (1, 1));
                y.mul(&y).sum_all()
            },
            10,
            H,
            11,
        );
        out.push(("conv2d_strided", report));
    }

    // max pool along frequency (values spaced so no window has a near-tie)
    {
        let vals: Vec<f64> = (0..14).map(|i| ((i * 5) % 14) as f64 * 0.37 + 0.1).collect();
        let x = Tensor::from_vec(&[1, 7, 2], vals).requires_grad();
        let w = Tensor::from_vec(&[1, 3, 2], smooth(6, &mut rng));
        let params = vec![("x".into(), x.clone())];
        let report = check_gradients(
            &params,
            || x.max_pool_freq(3).mul(&w).sum_all(),
            14,
            H,
            12,
        );
        out.push(("max_pool_freq", report));
    }

    // dropout with a deterministic mask (fresh seeded RNG per evaluation)
    {
        let x = Tensor::from_vec(&[24], smooth(24, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[24], smooth(24, &mut rng));
        let params = vec![("x".into(), x.clone())];
        let report = check_gradients(
            &params,
            || {
                let mut mask_rng = ChaCha8Rng::seed_from_u64(42);
                x.dropout(0.3, &mut mask_rng).mul(&w).sum_all()
            },
            20,
            H,
            13,
        );
        out.push(("dropout", report));
    }

    // linear layer (weights, bias, and input)
    {
        let lin = Linear::<f64>::new(6, 4, true, &mut rng);
        let x = Tensor::from_vec(&[3, 6], smooth(18, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[3, 4], smooth(12, &mut rng));
        let params = vec![
            ("w".into(), lin.w.clone()),
            ("b".into(), lin.b.clone().unwrap()),
            ("x".into(), x.clone()),
        ];
        let report = check_gradients(&params, || lin.forward(&x).mul(&w).sum_all(), 8, H, 14);
        out.push(("linear", report));
    }

    // multi-head attention end to end
    {
        let mha = MultiHeadAttention::<f64>::new(8, 2, &mut rng);
        let x = Tensor::from_vec(&[2, 3, 8], smooth(48, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[2, 3, 8], smooth(48, &mut rng));
        let mut params = vec![("x".into(), x.clone())];
        let mut ps = beatforge::nn::ParamSet::new();
        mha.register("mha", &mut ps);
        for (name, t) in ps.iter() {
            params.push((name.clone(), t.clone()));
        }
        let report = check_gradients(
            &params,
            || mha.forward(&x).0.mul(&w).sum_all(),
            4,
            H,
            15,
        );
        out.push(("attention", report));
    }

    // full pre-norm encoder layer
    {
        let layer = EncoderLayer::<f64>::new(8, 2, 2, 0.0, &mut rng);
        let x = Tensor::from_vec(&[1, 4, 8], smooth(32, &mut rng)).requires_grad();
        let w = Tensor::from_vec(&[1, 4, 8], smooth(32, &mut rng));
        let mut params = vec![("x".into(), x.clone())];
        let mut ps = beatforge::nn::ParamSet::new();
        layer.register("enc", &mut ps);
        for (name, t) in ps.iter() {
            params.push((name.clone(), t.clone()));
        }
        let report = check_gradients(
            &params,
            || layer.forward(&x, &mut Mode::Eval).0.mul(&w).sum_all(),
            2,
            H,
            16,
        );
        out.push(("encoder_layer", report));
    }

    out
}
