//! Minimal differentiable-computation substrate: dense f64 tensors, a
//! reverse-mode tape, the layers the kernel-intensity model needs, and Adam.
//!
//! Everything runs in 64-bit floats on a single thread per tape; independent
//! graphs may live on separate threads.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use tape::{Gradients, NdiffError, Tape, Var};
pub use tensor::Tensor;
