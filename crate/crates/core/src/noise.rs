//! Counter-based Gaussian driving noise.
//!
//! Increments come from a ChaCha8 keystream: the seed selects the key, the
//! stream id selects the nonce and the step index fixes the word position.
//! Each step consumes a fixed number of words (Box–Muller on pairs of
//! uniforms), so the increment at `(seed, stream, step)` is a pure function
//! of that triple and can be regenerated in any order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }
}

/// Brownian increments `Δw_k`, one `d`-vector per grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    dim: usize,
    key: NoiseKey,
    increments: Vec<f64>,
}

fn words_per_step(dim: usize) -> u128 {
    // two u64 (four u32 words) per pair of normals
    4 * dim.div_ceil(2) as u128
}

fn generator(key: NoiseKey) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key.seed);
    rng.set_stream(key.stream);
    rng
}

fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn unit_closed_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn fill_step(rng: &mut ChaCha8Rng, scale: f64, out: &mut [f64]) {
    for pair in out.chunks_mut(2) {
        let u1 = unit_open_closed(rng.next_u64());
        let u2 = unit_closed_open(rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt() * scale;
        let angle = std::f64::consts::TAU * u2;
        pair[0] = r * angle.cos();
        if pair.len() > 1 {
            pair[1] = r * angle.sin();
        }
    }
}

/// Samples i.i.d. `N(0, dt)` increments for every step of `grid`.
pub fn sample_noise(grid: TimeGrid, dim: usize, key: NoiseKey) -> Result<NoisePath> {
    if dim == 0 {
        return Err(invalid("noise dimension must be at least 1"));
    }
    let mut rng = generator(key);
    let scale = grid.dt().sqrt();
    let mut increments = vec![0.0; grid.n_steps() * dim];
    for step in increments.chunks_mut(dim) {
        fill_step(&mut rng, scale, step);
    }
    Ok(NoisePath {
        grid,
        dim,
        key,
        increments,
    })
}

/// The increment of step `k` regenerated directly from its counter.
pub fn increment_at(grid: &TimeGrid, dim: usize, key: NoiseKey, step: usize) -> Vec<f64> {
    let mut rng = generator(key);
    rng.set_word_pos(step as u128 * words_per_step(dim));
    let mut out = vec![0.0; dim];
    fill_step(&mut rng, grid.dt().sqrt(), &mut out);
    out
}

impl NoisePath {
    /// Wraps externally supplied increments (`n_steps * dim` values, row-major).
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 || increments.len() != grid.n_steps() * dim {
            return Err(invalid(format!(
                "expected {} increments, got {}",
                grid.n_steps() * dim,
                increments.len()
            )));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(invalid("noise increments must be finite"));
        }
        Ok(Self {
            grid,
            dim,
            key: NoiseKey::new(0),
            increments,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn key(&self) -> NoiseKey {
        self.key
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// Cumulative sums `w(t_k)`, row-major with `w(t_0) = 0`.
    pub fn cumulative(&self) -> Vec<f64> {
        let d = self.dim;
        let mut w = vec![0.0; (self.grid.n_steps() + 1) * d];
        for k in 0..self.grid.n_steps() {
            for i in 0..d {
                w[(k + 1) * d + i] = w[k * d + i] + self.increments[k * d + i];
            }
        }
        w
    }
}
