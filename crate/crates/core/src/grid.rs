use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform discretization of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(invalid(format!(
                "horizon must be positive and finite, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(invalid("grid needs at least one step"));
        }
        Ok(Self { t_end, n_steps })
    }

    /// Grid with step as close to `dt` as divides `t_end` evenly.
    ///
    /// Rejects step sizes that do not divide the horizon to within 1e-9 of a step.
    pub fn with_step(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!(
                "step must be positive and finite, got {dt}"
            )));
        }
        let ratio = t_end / dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(invalid(format!(
                "step {dt} does not divide horizon {t_end}"
            )));
        }
        Self::new(t_end, n as usize)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    /// Duration spanned by `steps` grid steps.
    pub fn span(&self, steps: usize) -> f64 {
        steps as f64 * self.dt()
    }

    /// Largest grid index whose time does not exceed `t` (with a 1e-9 step slack).
    pub fn index_at_or_before(&self, t: f64) -> Option<usize> {
        if t.is_nan() {
            return None;
        }
        let slack = 1e-9;
        let pos = t / self.dt();
        if pos < -slack {
            return None;
        }
        let k = (pos + slack).floor().max(0.0);
        Some((k as usize).min(self.n_steps))
    }

    /// Grid index of `t`, which must coincide with a grid time.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self
            .index_at_or_before(t)
            .ok_or_else(|| invalid(format!("time {t} precedes the grid")))?;
        if (self.time(k) - t).abs() > 1e-9 * self.dt() || t > self.t_end * (1.0 + 1e-12) {
            return Err(invalid(format!("time {t} is not a grid time")));
        }
        Ok(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = TimeGrid::with_step(1.0, 1e-4).unwrap();
        assert_eq!(g.n_steps(), 10_000);
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(g.n_steps()), 1.0);
        assert_eq!(g.index_of(0.5).unwrap(), 5000);
        assert_eq!(g.index_at_or_before(0.50005), Some(5000));
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(TimeGrid::with_step(1.0, 0.3).is_err());
        assert!(TimeGrid::with_step(1.0, -0.1).is_err());
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}
