//! Excursion structure of the normal coordinate `β(t) = φ^d_t(x)`.
//!
//! Zeros are detected by exact comparison with `0.0`, which the discrete
//! Skorokhod map produces by construction. Every gap between two consecutive
//! zero grid points is an excursion interval, including one-step gaps where
//! both endpoints are zeros: the grid zero set is a finite set of points, so
//! its complement after the first hit is exactly the union of these gaps.
//! A positive run after the last zero is an excursion with `τ = ∞`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::format::serde_time;
use crate::grid::TimeGrid;

/// An excursion `(σ_k, τ_k)` bounded by zero grid points; `end = None` means `τ_k = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Excursion {
    pub start: usize,
    pub end: Option<usize>,
}

impl Excursion {
    /// Number of grid steps spanned, `None` for an unfinished excursion.
    pub fn steps(&self) -> Option<usize> {
        self.end.map(|e| e - self.start)
    }

    /// Whether the closed interval lies inside `[0, t_k]`.
    pub fn completed_by(&self, k: usize) -> bool {
        matches!(self.end, Some(e) if e <= k)
    }

    pub fn contains_index(&self, k: usize) -> bool {
        k > self.start && self.end.is_none_or(|e| k < e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionDecomposition {
    grid: TimeGrid,
    zeros: Vec<usize>,
    intervals: Vec<Excursion>,
}

/// Decomposes a non-negative grid function into first hit, excursions and zero set.
pub fn decompose(grid: &TimeGrid, beta: &[f64]) -> Result<ExcursionDecomposition> {
    if beta.len() != grid.len() {
        return Err(invalid(format!(
            "boundary path has {} samples for a grid of {} points",
            beta.len(),
            grid.len()
        )));
    }
    if let Some((k, v)) = beta.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(invalid(format!(
            "boundary coordinate {v} at step {k} is negative"
        )));
    }
    let zeros: Vec<usize> = beta
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0.0)
        .map(|(k, _)| k)
        .collect();
    let mut intervals: Vec<Excursion> = zeros
        .windows(2)
        .map(|w| Excursion {
            start: w[0],
            end: Some(w[1]),
        })
        .collect();
    if let Some(&last) = zeros.last() {
        if last < grid.n_steps() {
            intervals.push(Excursion {
                start: last,
                end: None,
            });
        }
    }
    Ok(ExcursionDecomposition {
        grid: *grid,
        zeros,
        intervals,
    })
}

impl ExcursionDecomposition {
    /// Builds the decomposition from the zero grid indices alone.
    pub fn from_zeros(grid: &TimeGrid, mut zeros: Vec<usize>) -> Result<Self> {
        zeros.sort_unstable();
        zeros.dedup();
        if zeros.last().is_some_and(|&z| z > grid.n_steps()) {
            return Err(invalid("zero index beyond the grid"));
        }
        let mut beta = vec![1.0; grid.len()];
        for &z in &zeros {
            beta[z] = 0.0;
        }
        decompose(grid, &beta)
    }
}

/// Result of dropping short excursions.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub decomposition: ExcursionDecomposition,
    pub dropped: Vec<Excursion>,
    /// `Σ (τ_k − σ_k)` over the dropped excursions.
    pub tail_mass: f64,
}

impl ExcursionDecomposition {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Zero grid indices in increasing order.
    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }

    pub fn intervals(&self) -> &[Excursion] {
        &self.intervals
    }

    pub fn first_zero(&self) -> Option<usize> {
        self.zeros.first().copied()
    }

    /// First hit time `σ`, `+∞` when the path never reaches the boundary.
    pub fn sigma0(&self) -> f64 {
        self.first_zero()
            .map_or(f64::INFINITY, |k| self.grid.time(k))
    }

    pub fn is_zero(&self, k: usize) -> bool {
        self.zeros.binary_search(&k).is_ok()
    }

    /// Total grid measure of the zero set: number of zero points times `dt`.
    pub fn zero_set_measure(&self) -> f64 {
        self.grid.span(self.zeros.len())
    }

    /// Last zero index at or before `k`.
    pub fn last_zero_index(&self, k: usize) -> Option<usize> {
        match self.zeros.partition_point(|&z| z <= k) {
            0 => None,
            i => Some(self.zeros[i - 1]),
        }
    }

    /// `τ(t)`, the last boundary visit not after `t`.
    pub fn last_zero(&self, t: f64) -> Result<f64> {
        let k = self
            .grid
            .index_at_or_before(t)
            .ok_or_else(|| Error::Precondition(format!("time {t} precedes the grid")))?;
        self.last_zero_index(k)
            .map(|z| self.grid.time(z))
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "last zero undefined at t = {t} before the first hit {}",
                    self.sigma0()
                ))
            })
    }

    /// Length `τ_k − σ_k` of an excursion in time units, `∞` if unfinished.
    pub fn length(&self, e: &Excursion) -> f64 {
        e.steps().map_or(f64::INFINITY, |s| self.grid.span(s))
    }

    /// Drops excursions shorter than `min_length`.
    pub fn truncate(&self, min_length: f64) -> Result<Truncation> {
        if !(min_length >= 0.0) {
            return Err(invalid(format!(
                "minimum length must be non-negative, got {min_length}"
            )));
        }
        let (kept, dropped): (Vec<Excursion>, Vec<Excursion>) = self
            .intervals
            .iter()
            .partition(|e| self.length(e) >= min_length);
        let tail_mass = dropped.iter().map(|e| self.length(e)).sum();
        Ok(Truncation {
            decomposition: Self {
                grid: self.grid,
                zeros: self.zeros.clone(),
                intervals: kept,
            },
            dropped,
            tail_mass,
        })
    }

    /// Grid indices with `β > 0` reconstructed from `[0, σ) ∪ ⋃ (σ_k, τ_k)`.
    pub fn positive_indices(&self) -> Vec<usize> {
        let head = self.first_zero().unwrap_or(self.grid.len());
        let mut out: Vec<usize> = (0..head).collect();
        for e in &self.intervals {
            let end = e.end.unwrap_or(self.grid.len());
            out.extend(e.start + 1..end);
        }
        out
    }

    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary {
            sigma0: self.sigma0(),
            intervals: self
                .intervals
                .iter()
                .map(|e| {
                    [
                        self.grid.time(e.start),
                        e.end.map_or(f64::INFINITY, |k| self.grid.time(k)),
                    ]
                })
                .map(|[s, t]| IntervalRecord(s, t))
                .collect(),
            zero_measure: self.zero_set_measure(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }
}

/// `[σ, τ]` in JSON, with `τ = ∞` written as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord(pub f64, #[serde(with = "serde_time")] pub f64);

/// JSON form `{sigma0, intervals: [[s, t], …], zero_measure}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    #[serde(with = "serde_time")]
    pub sigma0: f64,
    pub intervals: Vec<IntervalRecord>,
    pub zero_measure: f64,
}
