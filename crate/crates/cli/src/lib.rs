//! Command-line experiments and the acceptance checks for `rflow-core`.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod verify;
