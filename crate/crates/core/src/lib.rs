//! TP-N2F: natural-language to formal-language program synthesis with
//! tensor product representations.
//!
//! The encoder binds a filler and a role vector for every input token and sums
//! the bindings; a reasoning MLP maps that order-2 representation to the
//! initial state of an attentional tuple decoder whose hidden state is read as
//! an order-3 representation and unbound into a relation and its arguments.

pub mod analysis;
pub mod config;
pub mod data;
pub mod lang;
pub mod model;
pub mod parallel;
pub mod tensor;
pub mod tpr;
pub mod train;

pub use tensor::{Tensor, TensorError};
