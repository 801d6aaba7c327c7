//! Dense matrices, activations and a reverse-mode gradient tape.

pub mod activations;
pub mod matrix;
pub mod tape;

pub use activations::{log_sigmoid_scalar, relu, sigmoid, sigmoid_scalar, softplus, softplus_scalar};
pub use matrix::{matmul, Matrix};
pub use tape::{Tape, Var};
