//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation of one objective evaluation
//! (define-by-run). [`Var`] handles refer to recorded nodes; arithmetic on
//! them appends new nodes. [`Tape::backward`] walks the record in reverse
//! and accumulates adjoints.
//!
//! ```
//! use dvip::autodiff::Tape;
//! use dvip::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = x.square();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).item(), 6.0);
//! ```

mod gradcheck;
mod ops;
mod tape;

pub use gradcheck::{grad_check, GradCheckFailure};
pub use tape::{Gradients, NodeId, Op, Tape, Var};
