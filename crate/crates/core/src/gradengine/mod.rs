//! Dense matrices, a reverse-mode tape for the fixed operator graph, and a
//! central-difference gradient checker.

mod check;
mod tape;
mod tensor;

pub use check::fd_check;
pub use tape::{dropout_apply, mse, row_softmax, tanh_map, DropoutMask, NodeId, Tape};
pub use tensor::Tensor2;
