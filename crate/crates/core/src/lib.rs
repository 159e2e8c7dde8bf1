//! Hierarchical convolutional-LSTM next-frame prediction for cloud imagery.
pub mod datasets;
pub mod error;
pub mod models;
pub mod nn;
pub mod objectives;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
