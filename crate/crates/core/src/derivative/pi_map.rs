//! The map `π` that erases the normal component's memory at boundary visits:
//! `π(x)(t) = x(t)` before the first hit and `P x(t) + Q (x(t) − x(τ(t)))` after.

use crate::error::{invalid, Result};
use crate::excursion::ExcursionDecomposition;
use crate::matrix::{ProjectionPair, SquareMatrix};
use crate::propagator::MatrixPath;

/// Right value of `π(x)` at grid index `j`.
pub(crate) fn pi_at(
    x: &[SquareMatrix],
    dec: &ExcursionDecomposition,
    proj: &ProjectionPair,
    j: usize,
) -> SquareMatrix {
    match dec.last_zero_index(j) {
        None => x[j].clone(),
        Some(tau) => proj.anchored(&x[j], &x[tau]),
    }
}

/// Left limit of `π(x)` at grid index `j`.
///
/// Away from zeros this is the right value. At a zero after the first hit
/// the anchor is the previous zero, since the reset happens at `t_j` itself;
/// at the first hit the left limit is still `x(t_j)`.
pub(crate) fn pi_left_at(
    x: &[SquareMatrix],
    dec: &ExcursionDecomposition,
    proj: &ProjectionPair,
    j: usize,
) -> SquareMatrix {
    if j > 0 && dec.is_zero(j) {
        return match dec.last_zero_index(j - 1) {
            None => x[j].clone(),
            Some(prev) => proj.anchored(&x[j], &x[prev]),
        };
    }
    pi_at(x, dec, proj, j)
}

fn check(x: &MatrixPath, dec: &ExcursionDecomposition) -> Result<()> {
    if x.grid() != dec.grid() {
        return Err(invalid(
            "matrix path and decomposition live on different grids",
        ));
    }
    Ok(())
}

pub fn pi_map(x: &MatrixPath, dec: &ExcursionDecomposition) -> Result<MatrixPath> {
    check(x, dec)?;
    let proj = ProjectionPair::new(x.dim());
    let values = (0..x.grid().len())
        .map(|j| pi_at(x.values(), dec, &proj, j))
        .collect();
    MatrixPath::new(*x.grid(), values)
}

/// Left limits `π(x)(t−)` at every grid time.
pub fn pi_map_left(x: &MatrixPath, dec: &ExcursionDecomposition) -> Result<MatrixPath> {
    check(x, dec)?;
    let proj = ProjectionPair::new(x.dim());
    let values = (0..x.grid().len())
        .map(|j| pi_left_at(x.values(), dec, &proj, j))
        .collect();
    MatrixPath::new(*x.grid(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excursion::decompose;
    use crate::grid::TimeGrid;

    fn zeros_at(grid: &TimeGrid, zeros: &[usize]) -> ExcursionDecomposition {
        let beta: Vec<f64> = (0..grid.len())
            .map(|k| if zeros.contains(&k) { 0.0 } else { 1.0 })
            .collect();
        decompose(grid, &beta).unwrap()
    }

    #[test]
    fn no_hit_is_identity() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let dec = zeros_at(&g, &[]);
        let x = MatrixPath::from_fn(g, |t| SquareMatrix::identity(2).scale(t)).unwrap();
        assert_eq!(pi_map(&x, &dec).unwrap(), x);
    }

    #[test]
    fn constant_identity_becomes_projection() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let dec = zeros_at(&g, &[4, 7]);
        let x = MatrixPath::constant(g, &SquareMatrix::identity(2));
        let y = pi_map(&x, &dec).unwrap();
        let p = ProjectionPair::new(2).p;
        for k in 0..g.len() {
            let want = if k < 4 {
                SquareMatrix::identity(2)
            } else {
                p.clone()
            };
            assert_eq!(y.at(k), &want, "k = {k}");
        }
    }

    #[test]
    fn hand_evaluation_between_zeros() {
        let g = TimeGrid::new(3.0, 6).unwrap();
        let dec = zeros_at(&g, &[2, 4]);
        let x = MatrixPath::from_fn(g, |t| SquareMatrix::identity(2).scale(t)).unwrap();
        let y = pi_map(&x, &dec).unwrap();
        // t = 2.5: 2.5 P + 0.5 Q
        assert_eq!(y.at(5), &SquareMatrix::diagonal(&[2.5, 0.5]));
        let left = pi_map_left(&x, &dec).unwrap();
        // left limit at the zero t = 2 is anchored at the previous zero t = 1
        assert_eq!(left.at(4), &SquareMatrix::diagonal(&[2.0, 1.0]));
        assert_eq!(left.at(2), &SquareMatrix::identity(2));
        assert_eq!(y.at(2), &SquareMatrix::diagonal(&[1.0, 0.0]));
    }
}
