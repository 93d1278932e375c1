//! Deterministic numeric kernel: dense matrices, softmax and log-sum-exp,
//! layer normalisation, the layer-normalised GRU cell, a small MLP classifier,
//! Adam, seeded initialisation and finite-difference gradient checking.

mod adam;
mod gradcheck;
mod gru;
mod matrix;
mod mlp;
mod ops;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use gru::{gru_step, GruParams, GAIN_NAMES};
pub use matrix::{axpy, cast_vec, dot, Matrix, Real};
pub use mlp::{mlp_forward_split, MlpClassifier};
pub use ops::{layer_norm, log_sum_exp, softmax, LAYER_NORM_EPS};
pub use rng::{seeded_uniform_init, SeededRng};

pub(crate) use gru::{gru_backward, gru_forward, GruCache};
pub(crate) use ops::{log_sum_exp_unchecked, softmax_unchecked};
