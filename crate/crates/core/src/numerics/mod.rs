//! Numerical substrate: dense matrices, activations, masked softmax,
//! initialization, reverse-mode differentiation and Adam.
//!
//! All arithmetic is `f64`. Nothing here spawns threads, so every result
//! is a deterministic function of its inputs and seeds.

pub mod activations;
pub mod adam;
pub mod init;
pub mod matrix;
pub mod softmax;
pub mod tape;

pub use activations::{elu, leaky_relu, DEFAULT_ELU_ALPHA, DEFAULT_LEAKY_SLOPE};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use init::{sub_seed, xavier_init};
pub use matrix::{ConstOperand, CsrMatrix, Matrix};
pub use softmax::{masked_softmax, row_softmax, Axis};
pub use tape::{Gradients, Tape, Var};
