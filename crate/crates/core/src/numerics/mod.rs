//! Reverse-mode differentiation, layers, Gaussian calculus and Adam.

pub mod adam;
pub mod gaussian;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, optimize_step, AdamConfig, AdamState};
pub use gaussian::{gaussian_kl, gaussian_log_prob, gaussian_rsample, DiagGaussian, GaussianVars};
pub use layers::{linear_forward, Linear, LstmCell, Mlp, LOG_STD_MAX, LOG_STD_MIN};
pub use params::{ParamId, ParamSet};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
