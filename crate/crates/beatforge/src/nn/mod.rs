//! Minimal reverse-mode autodiff and the neural building blocks used by the
//! sequence models: dense/conv layers, normalization, multi-head attention,
//! Adam, and a finite-difference gradient checker.
//!
//! The tape is generic over [`Real`] so the same model code runs at f32 for
//! training/inference and at f64 for gradient verification.

pub mod adam;
pub mod attention;
mod conv;
pub mod gradcheck;
pub mod init;
pub mod linear;
pub mod norm;
mod ops;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod transformer;

pub use adam::{Adam, AdamConfig};
pub use attention::MultiHeadAttention;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use linear::Linear;
pub use params::ParamSet;
pub use scalar::Real;
pub use tensor::{no_grad, Tensor};
pub use transformer::{EncoderLayer, Mode};
