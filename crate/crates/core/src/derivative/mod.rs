//! Derivative of the reflected flow in its initial point.
//!
//! The derivative `γ(t)` solves
//!
//! ```text
//! P γ(t) = P + ∫₀ᵗ P α γ ds,
//! Q γ(t) = ∫_{τ(t)}^t Q α γ ds        (t >= σ),
//! γ(t)   = E + ∫₀ᵗ α γ ds             (t < σ),
//! ```
//!
//! with `α(t) = ∇a(φ_t(x))`. Two solvers are provided: Picard iteration of
//! `γ = π(E + ∫ α γ)` and the ordered product of sandwiched propagators over
//! the excursions of the normal coordinate.

mod finite_diff;
mod pi_map;
mod picard;
mod product;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use finite_diff::{finite_difference, FiniteDifference};
pub use pi_map::{pi_map, pi_map_left};
pub use picard::{solve_picard, PicardOptions};
pub use product::{
    ordered_product, product_formula, product_tail_bound, solve_product, Factor, OrderedFactorSet,
    ProductEvaluation,
};

use crate::drift::DriftSpec;
use crate::error::{invalid, Result};
use crate::excursion::{decompose, ExcursionDecomposition};
use crate::format::fmt_f64;
use crate::grid::TimeGrid;
use crate::matrix::{operator_norm, ProjectionPair, SquareMatrix};
use crate::propagator::MatrixPath;
use crate::rsde::ReflectedPath;

/// Solver selection for [`derivative_for_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Picard(PicardOptions),
    /// Product over excursions; those shorter than `min_length` are replaced by `P`.
    /// `None` keeps every excursion (minimum length `dt`).
    Product {
        min_length: Option<f64>,
    },
}

impl Method {
    pub fn picard() -> Self {
        Self::Picard(PicardOptions::default())
    }

    pub fn product() -> Self {
        Self::Product { min_length: None }
    }
}

/// How a solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodReport {
    Picard {
        iterations: usize,
        /// Last sup-norm change between iterates.
        residual: f64,
        /// Number of horizon windows the iteration was split into.
        windows: usize,
    },
    Product {
        min_length: f64,
        /// Bound on `sup_t ‖γ_truncated(t) − γ(t)‖` from the dropped factors.
        tail_bound: f64,
    },
}

impl MethodReport {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Picard { .. } => "picard",
            Self::Product { .. } => "product",
        }
    }
}

/// Discrete residuals of the derivative system, each a sup over grid times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemResidual {
    /// `‖P γ − P − ∫ P α γ‖` after the first hit.
    pub tangential: f64,
    /// `‖Q γ − ∫_{τ(t)}^t Q α γ‖` after the first hit.
    pub normal: f64,
    /// `‖γ − E − ∫ α γ‖` before the first hit.
    pub pre_hit: f64,
}

impl SystemResidual {
    pub fn max(&self) -> f64 {
        self.tangential.max(self.normal).max(self.pre_hit)
    }
}

/// `γ` at every grid time together with its left limits.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSolution {
    pub gamma: MatrixPath,
    /// `γ(t−)`; differs from `gamma` only in the normal row at boundary visits.
    pub gamma_left: MatrixPath,
    pub method: MethodReport,
    pub decomposition: ExcursionDecomposition,
}

impl DerivativeSolution {
    pub fn grid(&self) -> &TimeGrid {
        self.gamma.grid()
    }

    pub fn at(&self, k: usize) -> &SquareMatrix {
        self.gamma.at(k)
    }

    pub fn last(&self) -> &SquareMatrix {
        self.gamma.at(self.grid().n_steps())
    }

    /// CSV rows `time, g_11 … g_dd, method, residual`.
    pub fn write_csv<W: Write>(&self, out: W, residual: f64) -> Result<()> {
        let d = self.gamma.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        for i in 1..=d {
            header.extend((1..=d).map(|j| format!("g_{i}_{j}")));
        }
        header.push("method".into());
        header.push("residual".into());
        w.write_record(&header)?;
        let method = self.method.name();
        for (k, t) in self.grid().times().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(self.gamma.at(k).as_slice().iter().map(|&v| fmt_f64(v)));
            row.push(method.into());
            row.push(fmt_f64(residual));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Largest operator-norm distance between two matrix paths on one grid.
pub fn sup_distance(a: &MatrixPath, b: &MatrixPath) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| operator_norm(&(x - y)))
        .fold(0.0, f64::max)
}

fn max_abs(m: &SquareMatrix) -> f64 {
    m.as_slice().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Evaluates the discrete system with trapezoidal integrals that use left limits
/// at the right end of each step.
pub fn system_residual(
    alpha: &MatrixPath,
    dec: &ExcursionDecomposition,
    gamma: &MatrixPath,
    gamma_left: &MatrixPath,
) -> Result<SystemResidual> {
    if alpha.grid() != dec.grid() || gamma.grid() != dec.grid() || gamma_left.grid() != dec.grid() {
        return Err(invalid("residual inputs live on different grids"));
    }
    let d = alpha.dim();
    let proj = ProjectionPair::new(d);
    let eye = SquareMatrix::identity(d);
    let h = dec.grid().dt();
    let mut integral = vec![SquareMatrix::zeros(d)];
    for j in 0..dec.grid().n_steps() {
        let mut next = integral[j].clone();
        next.axpy(h / 2.0, &(alpha.at(j) * gamma.at(j)));
        next.axpy(h / 2.0, &(alpha.at(j + 1) * gamma_left.at(j + 1)));
        integral.push(next);
    }
    let mut res = SystemResidual {
        tangential: 0.0,
        normal: 0.0,
        pre_hit: 0.0,
    };
    for (j, int_j) in integral.iter().enumerate() {
        let g = gamma.at(j);
        match dec.last_zero_index(j) {
            None => {
                let r = &(g - &eye) - int_j;
                res.pre_hit = res.pre_hit.max(max_abs(&r));
            }
            Some(tau) => {
                let r = proj.tangential(&(&(g - &eye) - int_j));
                res.tangential = res.tangential.max(max_abs(&r));
                let r = proj.normal(&(&(g - int_j) + &integral[tau]));
                res.normal = res.normal.max(max_abs(&r));
            }
        }
    }
    Ok(res)
}

/// `α(t) = ∇a(φ_t(x))` along a solved path.
pub fn jacobian_path(path: &ReflectedPath, drift: &DriftSpec) -> Result<MatrixPath> {
    if path.dim() != drift.dim() {
        return Err(invalid("path and drift dimensions differ"));
    }
    match drift {
        DriftSpec::Linear(a) => Ok(MatrixPath::constant(*path.grid(), a)),
        DriftSpec::Custom(_) => MatrixPath::new(
            *path.grid(),
            (0..path.grid().len())
                .map(|k| drift.jacobian(path.state(k)))
                .collect(),
        ),
    }
}

/// Derivative of the flow along `path` by the chosen method.
pub fn derivative_for_flow(
    path: &ReflectedPath,
    drift: &DriftSpec,
    method: Method,
) -> Result<DerivativeSolution> {
    let alpha = jacobian_path(path, drift)?;
    let dec = decompose(path.grid(), &path.boundary_coordinate())?;
    match method {
        Method::Picard(opts) => solve_picard(&alpha, &dec, opts),
        Method::Product { min_length } => {
            solve_product(&alpha, &dec, min_length.unwrap_or(path.grid().dt()))
        }
    }
}
