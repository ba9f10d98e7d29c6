//! Dense arrays and a closed set of differentiable operations.
//!
//! Gradients are computed by replaying the recorded tape (stored states), so
//! memory grows with the number of recorded ops.

mod array;
mod check;
mod graph;
pub(crate) mod kernels;
mod params;

pub use array::{for_each_index, strides_of, NdArray};
pub use check::finite_difference_check;
pub use graph::{Activation, Gradients, Graph, Var};
pub use kernels::Boundary;
pub use params::{gradient, value_and_gradient, ParamVector};

#[cfg(test)]
mod tests;
