//! Reverse-mode differentiation over dense tensors.

pub mod gradcheck;
mod kernels;
pub mod params;
pub mod tape;

pub use gradcheck::{grad_check, grad_check_params};
pub use params::{Graph, Group, Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
