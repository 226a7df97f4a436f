//! Reverse-mode automatic differentiation over `f64` ndarray tensors.
//!
//! The tape records every operation as a node; `Tape::backward` builds the
//! vector-Jacobian products *as new tape nodes*, so gradients are themselves
//! differentiable values. That property is what makes second-order terms such
//! as gradient penalties trainable: the squared norm of a first backward pass
//! can be fed straight into a second one.
//!
//! Tensors are kept in standard (C-order) layout and `f64` throughout, which
//! keeps finite-difference verification of every operation meaningful.

mod backward;
mod compose;
mod conv;
mod ops;
mod tape;

pub mod check;

pub use backward::Gradients;
pub use compose::{conv2d, conv_transpose2d, conv_out_size, conv_transpose_out_size};
pub use conv::ConvSpec;
pub use tape::{Tape, Var};
