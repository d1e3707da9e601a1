//! Weight initializers. All draw through the caller's RNG so a seeded run
//! reproduces bit-identical parameters.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scalar::Real;
use super::tensor::Tensor;

/// Glorot/Xavier uniform: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<T: Real>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Zero-mean Gaussian with the given standard deviation.
pub fn normal_init<T: Real>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("std must be finite and positive");
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::from_f64(dist.sample(rng))).collect();
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_within_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Tensor<f64> = glorot_uniform(&[64, 64], 64, 64, &mut rng);
        let limit = (6.0 / 128.0f64).sqrt();
        assert!(t.data().iter().all(|v| v.abs() < limit));
    }

    #[test]
    fn seeded_init_reproduces() {
        let a: Tensor<f32> = normal_init(&[100], 0.02, &mut ChaCha8Rng::seed_from_u64(9));
        let b: Tensor<f32> = normal_init(&[100], 0.02, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.to_vec(), b.to_vec());
    }
}
