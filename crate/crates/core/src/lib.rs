//! Simulation and learning core for mmWave beam tracking on an overhead
//! messenger wire.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod radio;
pub mod wire_sim;
pub mod deepq;
pub mod rarl;
