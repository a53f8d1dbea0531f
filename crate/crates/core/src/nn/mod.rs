//! Dense 4-D tensors, a reverse-mode tape over the layers the restoration
//! network needs, and Adam.

pub mod kernels;
pub mod param;
pub mod tape;
pub mod tensor;

pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{mse, softmax_row, Conv2dOpts, Gradients, Tape, Var};
pub use tensor::{Shape, Tensor};
