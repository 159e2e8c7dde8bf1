//! Layer vocabulary: convolution and its transpose, pooling, upsampling,
//! batch normalization, fully connected, LSTM and convolutional LSTM cells.

mod conv;
mod linear;
mod norm;
mod pool;
mod recurrent;

pub use conv::{conv2d, conv_transpose2d, Conv2dParams};
pub use linear::linear;
pub use norm::{batchnorm2d, BatchNormParams, BnMode};
pub use pool::{maxpool2d, upsample_nearest};
pub use recurrent::{convlstm_cell, lstm_cell, ConvLstmParams, ConvLstmState, LstmParams, LstmState, Peephole};
