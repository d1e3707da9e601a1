//! Beat and downbeat tracking for music audio.
//!
//! The crate covers the full path from a waveform to beat annotations:
//!
//! - [`audio`]: WAV I/O, resampling, annotation files, and click-track
//!   synthesis for controlled experiments.
//! - [`frontend`]: STFT magnitudes, a log-spaced filterbank with log
//!   compression, hop-size augmentation, and frame-level training targets.
//! - [`nn`]: a small reverse-mode autodiff tape plus the layers the models
//!   need (conv, attention, normalization, Adam).
//! - [`models`]: three sequence models over the same feature format — a
//!   dilated temporal conv net, a spectral-temporal transformer, and a
//!   two-branch fusion of both.
//! - [`dbn`]: a bar-pointer dynamic Bayesian network that turns framewise
//!   activations into a globally consistent beat/downbeat grid.
//! - [`metrics`]: F-measure and continuity scores for evaluation.
//! - [`training`]: chunk sampling, the weighted BCE objective, and a
//!   checkpointing training loop.
//! - [`pipeline`]: end-to-end tracking used by the CLI.

pub mod nn;
