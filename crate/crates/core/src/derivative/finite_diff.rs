use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{invalid, Result};
use crate::noise::NoisePath;
use crate::rsde::{solve_rsde, ReflectedPath};

/// Central difference estimate of one column of `∇φ_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifference {
    pub column: Vec<f64>,
    /// The two perturbed paths have different zero sets on `[0, t]`, so the
    /// derivative may jump between them and the estimate is not an oracle.
    pub near_critical: bool,
}

/// `(φ_t(x + h e_i) − φ_t(x − h e_i)) / 2h` under shared noise; `t` must be a grid time.
pub fn finite_difference(
    x: &[f64],
    h: f64,
    coordinate: usize,
    drift: &DriftSpec,
    noise: &NoisePath,
    t: f64,
) -> Result<FiniteDifference> {
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid(format!("offset must be positive, got {h}")));
    }
    if coordinate >= x.len() {
        return Err(invalid(format!(
            "coordinate {coordinate} out of range for dimension {}",
            x.len()
        )));
    }
    let k = noise.grid().index_of(t)?;
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[coordinate] += h;
    down[coordinate] -= h;
    let a = solve_rsde(&up, drift, noise)?;
    let b = solve_rsde(&down, drift, noise)?;
    let column = a
        .state(k)
        .iter()
        .zip(b.state(k))
        .map(|(p, q)| (p - q) / (2.0 * h))
        .collect();
    let zeros = |path: &ReflectedPath| -> Vec<usize> {
        let beta = path.boundary_coordinate();
        (0..=k).filter(|&j| beta[j] == 0.0).collect()
    };
    Ok(FiniteDifference {
        column,
        near_critical: zeros(&a) != zeros(&b),
    })
}
