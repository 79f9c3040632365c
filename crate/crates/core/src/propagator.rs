//! Fundamental solutions of `∂E_st/∂t = α(t) E_st`, `E_ss = E`.
//!
//! The generator is sampled on a [`TimeGrid`] and linearly interpolated
//! between samples. Each step is the classical fourth-order Runge–Kutta map,
//! written as a matrix so propagators over several steps are plain products.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;
use crate::matrix::SquareMatrix;

/// A matrix-valued function sampled on every point of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    grid: TimeGrid,
    values: Vec<SquareMatrix>,
}

impl MatrixPath {
    pub fn new(grid: TimeGrid, values: Vec<SquareMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "matrix path has {} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let dim = values[0].dim();
        if values.iter().any(|m| m.dim() != dim) {
            return Err(invalid("matrix path samples have mixed dimensions"));
        }
        if values.iter().any(|m| !m.is_finite()) {
            return Err(invalid("matrix path contains non-finite entries"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> SquareMatrix) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    pub fn constant(grid: TimeGrid, m: &SquareMatrix) -> Self {
        Self {
            grid,
            values: vec![m.clone(); grid.len()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn values(&self) -> &[SquareMatrix] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &SquareMatrix {
        &self.values[k]
    }

    /// Piecewise-linear interpolant at `t` (clamped to the grid).
    pub fn interpolate(&self, t: f64) -> SquareMatrix {
        let n = self.grid.n_steps();
        let pos = (t / self.grid.dt()).clamp(0.0, n as f64);
        let k = (pos.floor() as usize).min(n - 1);
        let w = pos - k as f64;
        let mut out = self.values[k].scale(1.0 - w);
        out.axpy(w, &self.values[k + 1]);
        out
    }

    /// Largest operator norm over the samples.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(crate::matrix::operator_norm)
            .fold(0.0, f64::max)
    }
}

/// `E_{st}` together with its time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagator {
    pub start: f64,
    pub end: f64,
    pub matrix: SquareMatrix,
}

/// One RK4 step of `Y' = α Y` over length `h`, as the matrix `M` with `Y_{+} = M Y`.
pub fn rk4_step_matrix(
    alpha_start: &SquareMatrix,
    alpha_mid: &SquareMatrix,
    alpha_end: &SquareMatrix,
    h: f64,
) -> SquareMatrix {
    let eye = SquareMatrix::identity(alpha_start.dim());
    let k1 = alpha_start.clone();
    let mut y = eye.clone();
    y.axpy(h / 2.0, &k1);
    let k2 = alpha_mid * &y;
    let mut y = eye.clone();
    y.axpy(h / 2.0, &k2);
    let k3 = alpha_mid * &y;
    let mut y = eye.clone();
    y.axpy(h, &k3);
    let k4 = alpha_end * &y;

    let mut m = eye;
    m.axpy(h / 6.0, &k1);
    m.axpy(h / 3.0, &k2);
    m.axpy(h / 3.0, &k3);
    m.axpy(h / 6.0, &k4);
    m
}

fn midpoint(a: &SquareMatrix, b: &SquareMatrix) -> SquareMatrix {
    let mut m = a.scale(0.5);
    m.axpy(0.5, b);
    m
}

/// Precomputed RK4 step maps for every grid step of a generator.
#[derive(Debug, Clone)]
pub struct StepMaps {
    grid: TimeGrid,
    steps: Vec<SquareMatrix>,
}

impl StepMaps {
    pub fn new(alpha: &MatrixPath) -> Self {
        let h = alpha.grid().dt();
        let steps = alpha
            .values()
            .windows(2)
            .map(|w| rk4_step_matrix(&w[0], &midpoint(&w[0], &w[1]), &w[1], h))
            .collect();
        Self {
            grid: *alpha.grid(),
            steps,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Map of the step `[t_k, t_{k+1}]`.
    pub fn step(&self, k: usize) -> &SquareMatrix {
        &self.steps[k]
    }

    /// `E_{t_i t_j}` for grid indices `i <= j`.
    pub fn between(&self, i: usize, j: usize) -> SquareMatrix {
        assert!(
            i <= j && j <= self.grid.n_steps(),
            "bad propagator indices {i}..{j}"
        );
        let mut m = SquareMatrix::identity(self.steps[0].dim());
        for step in &self.steps[i..j] {
            m = step * &m;
        }
        m
    }
}

/// Solves the propagator equation from `s` to `t` on the sampling grid of `alpha`.
///
/// Full grid steps use the RK4 step map; a partial step at either end uses the
/// same scheme on the sub-interval with the interpolated generator. Global
/// error is fourth order in the grid step.
pub fn solve_propagator(alpha: &MatrixPath, s: f64, t: f64) -> Result<Propagator> {
    if !(s.is_finite() && t.is_finite()) {
        return Err(invalid("propagator endpoints must be finite"));
    }
    if s > t {
        return Err(invalid(format!(
            "propagator start {s} is after its end {t}"
        )));
    }
    let grid = alpha.grid();
    let slack = 1e-9 * grid.dt();
    if s < -slack || t > grid.t_end() + slack {
        return Err(invalid(format!(
            "propagator interval [{s}, {t}] leaves the grid [0, {}]",
            grid.t_end()
        )));
    }
    let snap = |x: f64| -> f64 {
        let k = grid.index_at_or_before(x).unwrap_or(0);
        let nearest = [k, (k + 1).min(grid.n_steps())]
            .into_iter()
            .min_by(|&a, &b| {
                (grid.time(a) - x)
                    .abs()
                    .total_cmp(&(grid.time(b) - x).abs())
            })
            .unwrap_or(k);
        if (grid.time(nearest) - x).abs() <= slack {
            grid.time(nearest)
        } else {
            x
        }
    };
    let (s, t) = (snap(s), snap(t));
    let dim = alpha.dim();
    let mut m = SquareMatrix::identity(dim);
    if s == t {
        return Ok(Propagator {
            start: s,
            end: t,
            matrix: m,
        });
    }
    let first = grid
        .index_at_or_before(s)
        .unwrap_or(0)
        .min(grid.n_steps() - 1);
    for k in first..grid.n_steps() {
        let (lo, hi) = (grid.time(k), grid.time(k + 1));
        if lo >= t {
            break;
        }
        let a = s.max(lo);
        let b = t.min(hi);
        if b <= a {
            continue;
        }
        let step = if a == lo && b == hi {
            let (a0, a1) = (alpha.at(k), alpha.at(k + 1));
            rk4_step_matrix(a0, &midpoint(a0, a1), a1, grid.dt())
        } else {
            rk4_step_matrix(
                &alpha.interpolate(a),
                &alpha.interpolate(0.5 * (a + b)),
                &alpha.interpolate(b),
                b - a,
            )
        };
        m = &step * &m;
    }
    if !m.is_finite() {
        return Err(invalid("propagator overflowed"));
    }
    Ok(Propagator {
        start: s,
        end: t,
        matrix: m,
    })
}
