//! Dense `f64` tensors and a reverse-mode tape.

mod dense;
mod gradcheck;
mod tape;

pub use dense::DenseTensor;
pub use gradcheck::{grad_check, grad_check_many};
pub use tape::{broadcast_shape, NodeId, OpKind, Tape};
