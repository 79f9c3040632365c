//! The derivative as an ordered product over excursions:
//!
//! `γ(t) = E_{τ(t) t} · P · ∏ (P E_{σ_i τ_i} P) · E_{0 σ}`
//!
//! with later excursions multiplying on the left.

use serde::{Deserialize, Serialize};

use super::{DerivativeSolution, MethodReport};
use crate::error::{invalid, Result};
use crate::excursion::ExcursionDecomposition;
use crate::matrix::{operator_norm, ProjectionPair, SquareMatrix};
use crate::propagator::{solve_propagator, MatrixPath, StepMaps};

/// `(Σ_dropped ‖B_j‖) · exp(Σ_all ‖B_k‖)`.
pub fn product_tail_bound(dropped: &[f64], total: f64) -> f64 {
    debug_assert!(dropped.iter().all(|&b| b >= 0.0) && total >= 0.0);
    let dropped: f64 = dropped.iter().sum();
    if dropped == 0.0 {
        0.0
    } else {
        dropped * total.exp()
    }
}

/// `A_n ⋯ A_2 A_1 · unit`: later factors on the left.
pub fn ordered_product<'a>(
    unit: &SquareMatrix,
    factors: impl IntoIterator<Item = &'a SquareMatrix>,
) -> SquareMatrix {
    factors.into_iter().fold(unit.clone(), |acc, a| a * &acc)
}

/// One factor `A_i` attached to its excursion `(σ_i, τ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub start: f64,
    pub end: f64,
    pub matrix: SquareMatrix,
}

/// Factors `A_i = unit + B_i` in interval order with the gaps `‖B_i‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedFactorSet {
    unit: SquareMatrix,
    factors: Vec<Factor>,
    gaps: Vec<f64>,
}

impl OrderedFactorSet {
    /// `unit` plays the identity: `E` in general, `P` for sandwiched propagators.
    pub fn new(unit: SquareMatrix, factors: Vec<Factor>) -> Result<Self> {
        for pair in factors.windows(2) {
            if !(pair[0].end <= pair[1].start) {
                return Err(invalid(format!(
                    "factor intervals out of order: ({}, {}) then ({}, {})",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        if factors
            .iter()
            .any(|f| f.matrix.dim() != unit.dim() || !(f.start <= f.end))
        {
            return Err(invalid(
                "factor has the wrong dimension or a reversed interval",
            ));
        }
        let gaps = factors
            .iter()
            .map(|f| operator_norm(&(&f.matrix - &unit)))
            .collect();
        Ok(Self {
            unit,
            factors,
            gaps,
        })
    }

    pub fn unit(&self) -> &SquareMatrix {
        &self.unit
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// `‖B_i‖` for every factor.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn gap_sum(&self) -> f64 {
        self.gaps.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn product(&self) -> SquareMatrix {
        ordered_product(&self.unit, self.factors.iter().map(|f| &f.matrix))
    }

    /// Product over the factors with `keep[i]`; the others are replaced by the unit.
    pub fn product_subset(&self, keep: &[bool]) -> SquareMatrix {
        assert_eq!(keep.len(), self.factors.len());
        ordered_product(
            &self.unit,
            self.factors
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(f, _)| &f.matrix),
        )
    }

    /// Tail bound for dropping the factors with `!keep[i]`.
    pub fn tail_bound(&self, keep: &[bool]) -> f64 {
        let dropped: Vec<f64> = self
            .gaps
            .iter()
            .zip(keep)
            .filter(|(_, &k)| !k)
            .map(|(g, _)| *g)
            .collect();
        product_tail_bound(&dropped, self.gap_sum())
    }
}

/// `γ(t)` from the product representation at a single time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductEvaluation {
    pub matrix: SquareMatrix,
    /// All sandwiched factors of excursions completed by `t`.
    pub factors: OrderedFactorSet,
    /// Which factors entered the product.
    pub kept: Vec<bool>,
    /// Bound on the distance to the untruncated product.
    pub tail_bound: f64,
}

fn warn_on_zero_mass(dec: &ExcursionDecomposition) {
    let grid = dec.grid();
    if dec.zero_set_measure() > 0.05 * grid.t_end() {
        log::warn!(
            "zero set occupies {:.1}% of the horizon; the product representation assumes it is negligible",
            100.0 * dec.zero_set_measure() / grid.t_end()
        );
    }
}

/// Evaluates the product formula at `t`, dropping excursions shorter than `min_length`.
pub fn product_formula(
    alpha: &MatrixPath,
    dec: &ExcursionDecomposition,
    t: f64,
    min_length: f64,
) -> Result<ProductEvaluation> {
    if alpha.grid() != dec.grid() {
        return Err(invalid(
            "generator and decomposition live on different grids",
        ));
    }
    if !(min_length >= 0.0) {
        return Err(invalid(format!(
            "minimum length must be non-negative, got {min_length}"
        )));
    }
    let grid = dec.grid();
    let k = grid
        .index_at_or_before(t)
        .ok_or_else(|| invalid(format!("time {t} precedes the grid")))?;
    warn_on_zero_mass(dec);
    let proj = ProjectionPair::new(alpha.dim());
    let (Some(first), Some(last)) = (dec.first_zero(), dec.last_zero_index(k)) else {
        return Ok(ProductEvaluation {
            matrix: solve_propagator(alpha, 0.0, t)?.matrix,
            factors: OrderedFactorSet::new(proj.p, Vec::new())?,
            kept: Vec::new(),
            tail_bound: 0.0,
        });
    };
    let mut factors = Vec::new();
    let mut kept = Vec::new();
    for e in dec.intervals().iter().filter(|e| e.completed_by(k)) {
        let (s, u) = (grid.time(e.start), grid.time(e.end.expect("completed")));
        let prop = solve_propagator(alpha, s, u)?;
        factors.push(Factor {
            start: s,
            end: u,
            matrix: proj.sandwich(&prop.matrix),
        });
        kept.push(dec.length(e) >= min_length);
    }
    let factors = OrderedFactorSet::new(proj.p.clone(), factors)?;
    let head = solve_propagator(alpha, 0.0, grid.time(first))?.matrix;
    let tail = solve_propagator(alpha, grid.time(last), t)?.matrix;
    let middle = factors.product_subset(&kept);
    let matrix = &(&tail * &middle) * &head;
    let tail_bound = factors.tail_bound(&kept) * operator_norm(&tail) * operator_norm(&head);
    Ok(ProductEvaluation {
        matrix,
        factors,
        kept,
        tail_bound,
    })
}

/// Product representation on the whole grid.
///
/// Sweeps once through the grid keeping `run = E_{τ(t) t}` and
/// `base = P ∏(P E P) E_{0σ}`, so `γ(t) = run · base`.
pub fn solve_product(
    alpha: &MatrixPath,
    dec: &ExcursionDecomposition,
    min_length: f64,
) -> Result<DerivativeSolution> {
    if alpha.grid() != dec.grid() {
        return Err(invalid(
            "generator and decomposition live on different grids",
        ));
    }
    if !(min_length >= 0.0) {
        return Err(invalid(format!(
            "minimum length must be non-negative, got {min_length}"
        )));
    }
    warn_on_zero_mass(dec);
    let grid = *dec.grid();
    let d = alpha.dim();
    let proj = ProjectionPair::new(d);
    let steps = StepMaps::new(alpha);

    let mut run = SquareMatrix::identity(d);
    let mut base = SquareMatrix::identity(d);
    let mut head_norm = 1.0;
    let mut since_zero = 0usize;
    let mut seen_zero = false;
    let (mut dropped_gap, mut total_gap) = (0.0, 0.0);
    let mut tail_bound: f64 = 0.0;

    let mut gamma = Vec::with_capacity(grid.len());
    let mut left = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        if k > 0 {
            run = steps.step(k - 1) * &run;
            since_zero += 1;
        }
        if dec.is_zero(k) {
            left.push(&run * &base);
            if !seen_zero {
                head_norm = operator_norm(&run);
                base = proj.tangential(&run);
                seen_zero = true;
            } else {
                let factor = proj.sandwich(&run);
                let gap = operator_norm(&(&factor - &proj.p));
                total_gap += gap;
                if grid.span(since_zero) >= min_length {
                    base = &factor * &base;
                } else {
                    dropped_gap += gap;
                }
            }
            run = SquareMatrix::identity(d);
            since_zero = 0;
            gamma.push(base.clone());
        } else {
            let g = &run * &base;
            left.push(g.clone());
            gamma.push(g);
        }
        if dropped_gap > 0.0 {
            let bound =
                product_tail_bound(&[dropped_gap], total_gap) * operator_norm(&run) * head_norm;
            tail_bound = tail_bound.max(bound);
        }
    }
    Ok(DerivativeSolution {
        gamma: MatrixPath::new(grid, gamma)?,
        gamma_left: MatrixPath::new(grid, left)?,
        method: MethodReport::Product {
            min_length,
            tail_bound,
        },
        decomposition: dec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::decompose;
    use crate::grid::TimeGrid;
    use crate::matrix::mat_exp;

    fn dec_with_zeros(grid: &TimeGrid, zeros: &[usize]) -> ExcursionDecomposition {
        let beta: Vec<f64> = (0..grid.len())
            .map(|k| if zeros.contains(&k) { 0.0 } else { 1.0 })
            .collect();
        decompose(grid, &beta).unwrap()
    }

    fn example() -> SquareMatrix {
        SquareMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn tail_bound_values() {
        assert_eq!(product_tail_bound(&[], 3.0), 0.0);
        // ‖B_j‖ = 2^{-j} for j >= 0: dropping j > m leaves 2^{-m}, the total is 2
        let m = 5;
        let dropped: Vec<f64> = (m + 1..80).map(|j| 0.5f64.powi(j)).collect();
        let total: f64 = (0..80).map(|j| 0.5f64.powi(j)).sum();
        let bound = product_tail_bound(&dropped, total);
        assert!((bound - 0.5f64.powi(m) * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn empty_product_before_any_excursion() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let dec = dec_with_zeros(&g, &[500]);
        let a = example();
        let alpha = MatrixPath::constant(g, &a);
        let ev = product_formula(&alpha, &dec, 1.0, 0.0).unwrap();
        assert!(ev.factors.is_empty());
        let p = ProjectionPair::new(2).p;
        let want = &(&mat_exp(&a, 0.5).unwrap() * &p) * &mat_exp(&a, 0.5).unwrap();
        assert!(ev.matrix.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn single_excursion_matches_scalar_formula() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let dec = dec_with_zeros(&g, &[500, 700, 900]);
        let alpha = MatrixPath::constant(g, &example());
        let ev = product_formula(&alpha, &dec, 1.0, 0.0).unwrap();
        let f = |s: f64| ((2.0 * s).exp() + 1.0) / 2.0;
        // intervals (0.5, 0.7) and (0.7, 0.9) followed by the run (0.9, 1.0)
        let want = f(0.5) * f(0.2) * f(0.2) * f(0.1);
        assert!((ev.matrix[(0, 0)] - want).abs() < 1e-10 * want);
    }

    #[test]
    fn whole_grid_matches_single_time_evaluation() {
        let g = TimeGrid::new(1.0, 400).unwrap();
        let dec = dec_with_zeros(&g, &[50, 51, 200, 330]);
        let alpha = MatrixPath::from_fn(g, |t| {
            SquareMatrix::from_rows(&[[0.2, t, 0.0], [1.0, -0.5, t], [0.3, 0.3, 0.1]]).unwrap()
        })
        .unwrap();
        let sol = solve_product(&alpha, &dec, 0.0).unwrap();
        for k in [0, 49, 50, 51, 52, 199, 200, 250, 330, 400] {
            let ev = product_formula(&alpha, &dec, g.time(k), 0.0).unwrap();
            assert!(sol.at(k).max_abs_diff(&ev.matrix) < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn factor_set_rejects_disorder() {
        let e = SquareMatrix::identity(2);
        let f = |s, t| Factor {
            start: s,
            end: t,
            matrix: e.clone(),
        };
        assert!(OrderedFactorSet::new(e.clone(), vec![f(0.0, 0.5), f(0.4, 0.6)]).is_err());
        assert!(OrderedFactorSet::new(e.clone(), vec![f(0.0, 0.5), f(0.5, 0.6)]).is_ok());
    }

    #[test]
    fn later_factors_multiply_on_the_left() {
        let a = SquareMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let b = SquareMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        let e = SquareMatrix::identity(2);
        assert_eq!(ordered_product(&e, [&a, &b]), &b * &a);
    }

    #[test]
    fn truncation_error_within_bound() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let zeros: Vec<usize> = vec![100, 103, 110, 300, 302, 600, 601, 800];
        let dec = dec_with_zeros(&g, &zeros);
        let alpha = MatrixPath::constant(g, &example());
        let full = solve_product(&alpha, &dec, 0.0).unwrap();
        let cut = solve_product(&alpha, &dec, 0.01).unwrap();
        let MethodReport::Product { tail_bound, .. } = cut.method else {
            unreachable!()
        };
        let err = super::super::sup_distance(&full.gamma, &cut.gamma);
        assert!(err > 0.0 && err <= tail_bound, "{err} > {tail_bound}");
    }
}
