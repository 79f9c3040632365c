use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::matrix::{operator_norm, SquareMatrix};

type DriftFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JacobianFn = dyn Fn(&[f64]) -> SquareMatrix + Send + Sync;

/// A user supplied drift `a` with its Jacobian `∇a`.
#[derive(Clone)]
pub struct CustomDrift {
    dim: usize,
    value: Arc<DriftFn>,
    jacobian: Arc<JacobianFn>,
    gradient_bound: f64,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift")
            .field("dim", &self.dim)
            .field("gradient_bound", &self.gradient_bound)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum DriftSpec {
    /// `a(x) = A x`
    Linear(SquareMatrix),
    Custom(CustomDrift),
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        Self::Linear(SquareMatrix::zeros(dim))
    }

    /// `A = [[1, 1], [1, 1]]`, the planar drift whose flow is nowhere locally
    /// differentiable after the first boundary hit.
    pub fn symmetric_example() -> Self {
        Self::Linear(example_matrix())
    }

    pub fn custom(
        dim: usize,
        gradient_bound: f64,
        value: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> SquareMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("drift dimension must be at least 1"));
        }
        if !(gradient_bound.is_finite() && gradient_bound >= 0.0) {
            return Err(invalid(
                "drift gradient bound must be finite and non-negative",
            ));
        }
        Ok(Self::Custom(CustomDrift {
            dim,
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
            gradient_bound,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear(a) => a.dim(),
            Self::Custom(c) => c.dim,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Linear(a) => a.mul_vec_into(x, out),
            Self::Custom(c) => (c.value)(x, out),
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> SquareMatrix {
        match self {
            Self::Linear(a) => a.clone(),
            Self::Custom(c) => (c.jacobian)(x),
        }
    }

    /// Bound on `‖∇a‖` over the closed half-space.
    pub fn gradient_bound(&self) -> f64 {
        match self {
            Self::Linear(a) => operator_norm(a),
            Self::Custom(c) => c.gradient_bound,
        }
    }
}

pub fn example_matrix() -> SquareMatrix {
    SquareMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).expect("static matrix")
}
