//! Reflected stochastic flows in the half-space `{x_d >= 0}` and their
//! derivative in the initial point.
//!
//! The crate is organised bottom-up: small dense matrices and propagators,
//! the pathwise reflected solver, the excursion structure of the normal
//! coordinate, the two derivative solvers, and the planar example whose
//! derivative field is discontinuous.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod derivative;
pub mod drift;
pub mod error;
pub mod example2d;
pub mod excursion;
pub mod format;
pub mod grid;
pub mod matrix;
pub mod noise;
pub mod propagator;
pub mod rsde;

pub use drift::DriftSpec;
pub use error::{Error, Result};
pub use excursion::{decompose, Excursion, ExcursionDecomposition};
pub use grid::TimeGrid;
pub use matrix::{mat_exp, operator_norm, ProjectionPair, SquareMatrix};
pub use noise::{sample_noise, NoiseKey, NoisePath};
pub use propagator::{solve_propagator, MatrixPath, Propagator};
pub use rsde::{skorokhod_map, solve_rsde, solve_rsde_shared, ReflectedPath};
