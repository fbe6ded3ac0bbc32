//! Densely nested top-down flow (DNTDF) saliency decoder on a small CPU
//! tensor/autograd core, with static cost accounting and saliency metrics.

pub mod arch;
pub mod autograd;
pub mod complexity;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod harness;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod tensor;

pub use autograd::{Gradients, Graph, Var};
pub use error::{Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
