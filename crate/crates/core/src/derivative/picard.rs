use serde::{Deserialize, Serialize};

use super::pi_map::{pi_at, pi_left_at};
use super::{DerivativeSolution, MethodReport};
use crate::error::{invalid, Error, Result};
use crate::excursion::ExcursionDecomposition;
use crate::matrix::{ProjectionPair, SquareMatrix};
use crate::propagator::MatrixPath;

/// Stopping rule for the successive approximations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// Sup-norm change between iterates (relative to `max(1, sup |γ|)`) below which we stop.
    pub tol: f64,
    /// Iteration cap per horizon window.
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Window counts tried in turn when the iteration over the whole horizon stalls.
const WINDOW_SCHEDULE: [usize; 4] = [1, 4, 16, 64];

/// Iterates `γ_{n+1} = π(E + ∫₀ α γ_n)` from `γ_0 ≡ E` with trapezoidal integrals.
///
/// If the iteration fails to settle on the whole horizon it is restarted on
/// successively finer windows, each solved with the earlier ones frozen.
pub fn solve_picard(
    alpha: &MatrixPath,
    dec: &ExcursionDecomposition,
    opts: PicardOptions,
) -> Result<DerivativeSolution> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(invalid(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if opts.max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    if alpha.grid() != dec.grid() {
        return Err(invalid(
            "generator and decomposition live on different grids",
        ));
    }
    let mut failure = None;
    for windows in WINDOW_SCHEDULE {
        match iterate(alpha, dec, opts, windows) {
            Ok(sol) => return Ok(sol),
            Err(e @ Error::Convergence { .. }) => {
                log::warn!("picard iteration with {windows} window(s) failed: {e}");
                failure = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(failure.expect("schedule is non-empty"))
}

fn iterate(
    alpha: &MatrixPath,
    dec: &ExcursionDecomposition,
    opts: PicardOptions,
    windows: usize,
) -> Result<DerivativeSolution> {
    let grid = *alpha.grid();
    let n = grid.n_steps();
    let h = grid.dt();
    let d = alpha.dim();
    let proj = ProjectionPair::new(d);
    let eye = SquareMatrix::identity(d);

    let mut x = vec![eye.clone(); n + 1];
    let mut gamma = vec![eye.clone(); n + 1];
    let mut left = vec![eye.clone(); n + 1];
    gamma[0] = pi_at(&x, dec, &proj, 0);

    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for w in 0..windows {
        let (a, b) = (w * n / windows, (w + 1) * n / windows);
        if a == b {
            continue;
        }
        let mut converged = false;
        let mut change = f64::INFINITY;
        for _ in 0..opts.max_iter {
            iterations += 1;
            for j in a..b {
                let mut next = x[j].clone();
                next.axpy(h / 2.0, &(alpha.at(j) * &gamma[j]));
                next.axpy(h / 2.0, &(alpha.at(j + 1) * &left[j + 1]));
                x[j + 1] = next;
            }
            change = 0.0;
            let mut scale: f64 = 1.0;
            for j in a + 1..=b {
                let g = pi_at(&x, dec, &proj, j);
                let l = pi_left_at(&x, dec, &proj, j);
                change = change
                    .max(g.max_abs_diff(&gamma[j]))
                    .max(l.max_abs_diff(&left[j]));
                scale = g.as_slice().iter().fold(scale, |m, v| m.max(v.abs()));
                gamma[j] = g;
                left[j] = l;
            }
            if !change.is_finite() {
                break;
            }
            change /= scale;
            if change < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                iterations,
                residual: change,
            });
        }
        residual = residual.max(change);
    }
    Ok(DerivativeSolution {
        gamma: MatrixPath::new(grid, gamma)?,
        gamma_left: MatrixPath::new(grid, left)?,
        method: MethodReport::Picard {
            iterations,
            residual,
            windows,
        },
        decomposition: dec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivative::system_residual;
    use crate::excursion::decompose;
    use crate::grid::TimeGrid;
    use crate::propagator::StepMaps;

    fn dec_with_zeros(grid: &TimeGrid, zeros: &[usize]) -> ExcursionDecomposition {
        let beta: Vec<f64> = (0..grid.len())
            .map(|k| if zeros.contains(&k) { 0.0 } else { 0.5 })
            .collect();
        decompose(grid, &beta).unwrap()
    }

    #[test]
    fn zero_generator_gives_identity_then_projection() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let dec = dec_with_zeros(&g, &[30, 60]);
        let alpha = MatrixPath::constant(g, &SquareMatrix::zeros(3));
        let sol = solve_picard(&alpha, &dec, PicardOptions::default()).unwrap();
        let p = ProjectionPair::new(3).p;
        for k in 0..g.len() {
            let want = if k < 30 {
                SquareMatrix::identity(3)
            } else {
                p.clone()
            };
            assert_eq!(sol.at(k), &want);
        }
    }

    #[test]
    fn no_hit_matches_propagator() {
        let g = TimeGrid::new(1.0, 2000).unwrap();
        let dec = dec_with_zeros(&g, &[]);
        let alpha = MatrixPath::from_fn(g, |t| {
            SquareMatrix::from_rows(&[[0.3, t], [-1.0, 0.5 * t * t]]).unwrap()
        })
        .unwrap();
        let sol = solve_picard(&alpha, &dec, PicardOptions::default()).unwrap();
        let exact = StepMaps::new(&alpha).between(0, g.n_steps());
        // trapezoidal fixed point is second order
        assert!(sol.last().max_abs_diff(&exact) < 1e-6);
    }

    #[test]
    fn converged_iterate_solves_the_discrete_system() {
        let g = TimeGrid::new(2.0, 800).unwrap();
        let dec = dec_with_zeros(&g, &[100, 101, 350, 700]);
        let alpha = MatrixPath::from_fn(g, |t| {
            SquareMatrix::from_rows(&[[1.0, t.sin()], [0.5, -1.0]]).unwrap()
        })
        .unwrap();
        let opts = PicardOptions::default();
        let sol = solve_picard(&alpha, &dec, opts).unwrap();
        let r = system_residual(&alpha, &dec, &sol.gamma, &sol.gamma_left).unwrap();
        assert!(r.max() <= 10.0 * opts.tol, "{r:?}");
    }

    #[test]
    fn stalled_iteration_reports_convergence_failure() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let dec = dec_with_zeros(&g, &[10]);
        let alpha = MatrixPath::constant(g, &SquareMatrix::identity(2).scale(3.0));
        let opts = PicardOptions {
            tol: 1e-14,
            max_iter: 2,
        };
        match solve_picard(&alpha, &dec, opts) {
            Err(Error::Convergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn windowed_restart_agrees_with_single_window() {
        let g = TimeGrid::new(1.0, 256).unwrap();
        let dec = dec_with_zeros(&g, &[40, 41, 200]);
        let alpha = MatrixPath::constant(
            g,
            &SquareMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap(),
        );
        let whole = iterate(&alpha, &dec, PicardOptions::default(), 1).unwrap();
        let split = iterate(&alpha, &dec, PicardOptions::default(), 16).unwrap();
        assert!(super::super::sup_distance(&whole.gamma, &split.gamma) < 1e-7);
    }

    #[test]
    fn rejects_bad_options() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let dec = dec_with_zeros(&g, &[]);
        let alpha = MatrixPath::constant(g, &SquareMatrix::zeros(1));
        let bad = PicardOptions {
            tol: 0.0,
            max_iter: 5,
        };
        assert!(matches!(
            solve_picard(&alpha, &dec, bad),
            Err(Error::InvalidArgument(_))
        ));
    }
}
