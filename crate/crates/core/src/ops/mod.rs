//! Raw numeric kernels shared by the autograd graph.

pub mod conv;
pub mod pool;
pub mod resize;
