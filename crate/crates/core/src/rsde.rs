//! Pathwise solution of the reflected SDE
//! `dφ = a(φ) dt + dw + n dL` in the half-space `{x_d >= 0}`.
//!
//! Each step applies an Euler–Maruyama increment to every coordinate. The
//! normal coordinate is carried as a free path `z` and passed through the
//! running-maximum Skorokhod map, so boundary visits land on exactly `0.0`
//! and the local time only grows at those visits.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::drift::DriftSpec;
use crate::error::{invalid, Result};
use crate::format::fmt_f64;
use crate::grid::TimeGrid;
use crate::noise::NoisePath;

/// Incremental one-dimensional Skorokhod map.
///
/// Feeding the free values `z_0, z_1, …` yields `z_k + L_k` with
/// `L_k = max(0, max_{j<=k} -z_j)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reflector {
    local_time: f64,
}

impl Reflector {
    pub fn new() -> Self {
        Self { local_time: 0.0 }
    }

    /// Returns `(reflected, local_time)` after absorbing `z`.
    #[inline]
    pub fn push(&mut self, z: f64) -> (f64, f64) {
        if -z > self.local_time {
            self.local_time = -z;
            (0.0, self.local_time)
        } else {
            (z + self.local_time, self.local_time)
        }
    }

    pub fn local_time(&self) -> f64 {
        self.local_time
    }
}

/// Skorokhod map of a scalar path started in `[0, ∞)`.
pub fn skorokhod_map(z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    match z.first() {
        None => return Ok((Vec::new(), Vec::new())),
        Some(&z0) if !(z0 >= 0.0) => {
            return Err(invalid(format!(
                "path starts outside the half-space at {z0}"
            )))
        }
        _ => {}
    }
    let mut reflector = Reflector::new();
    Ok(z.iter().map(|&v| reflector.push(v)).unzip())
}

/// Trajectory `φ_t(x)` with its local time on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    grid: TimeGrid,
    dim: usize,
    start: Vec<f64>,
    states: Vec<f64>,
    local_time: Vec<f64>,
}

impl ReflectedPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn local_time(&self) -> &[f64] {
        &self.local_time
    }

    /// Normal coordinate `φ^d_t(x)` at every grid time.
    pub fn boundary_coordinate(&self) -> Vec<f64> {
        self.coordinate(self.dim - 1)
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.states
            .iter()
            .skip(i)
            .step_by(self.dim)
            .copied()
            .collect()
    }

    /// Index of the first grid time on the boundary.
    pub fn first_hit(&self) -> Option<usize> {
        self.states
            .iter()
            .skip(self.dim - 1)
            .step_by(self.dim)
            .position(|&v| v == 0.0)
    }

    /// Checks the discrete half-space, monotonicity and complementarity conditions.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.grid.len();
        if self.states.len() != n * self.dim || self.local_time.len() != n {
            return Err("path arrays do not match the grid".into());
        }
        if self.local_time[0] != 0.0 {
            return Err(format!("local time starts at {}", self.local_time[0]));
        }
        for k in 0..n {
            let v = self.state(k)[self.dim - 1];
            if !(v >= 0.0) {
                return Err(format!("normal coordinate {v} < 0 at step {k}"));
            }
            if k > 0 {
                let dl = self.local_time[k] - self.local_time[k - 1];
                if dl < 0.0 {
                    return Err(format!("local time decreases at step {k}"));
                }
                if dl > 0.0 && v != 0.0 {
                    return Err(format!("local time grows off the boundary at step {k}"));
                }
            }
        }
        Ok(())
    }

    /// CSV with header `time,x_1..x_d,L` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        header.push("L".into());
        w.write_record(&header)?;
        for k in 0..self.grid.len() {
            let mut row = Vec::with_capacity(self.dim + 2);
            row.push(fmt_f64(self.grid.time(k)));
            row.extend(self.state(k).iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(self.local_time[k]));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "time" || &headers[headers.len() - 1] != "L" {
            return Err(invalid("path csv needs columns time, x_1..x_d, L"));
        }
        let dim = headers.len() - 2;
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut local_time = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| invalid(format!("bad number {s:?} in path csv: {e}")))
            };
            times.push(parse(&record[0])?);
            for i in 1..=dim {
                states.push(parse(&record[i])?);
            }
            local_time.push(parse(&record[dim + 1])?);
        }
        if times.len() < 2 {
            return Err(invalid("path csv needs at least two rows"));
        }
        let grid = TimeGrid::new(*times.last().expect("non-empty"), times.len() - 1)?;
        for (k, &t) in times.iter().enumerate() {
            if (grid.time(k) - t).abs() > 1e-9 * grid.dt() {
                return Err(invalid(format!("non-uniform time {t} at row {k}")));
            }
        }
        Ok(Self {
            grid,
            dim,
            start: states[..dim].to_vec(),
            states,
            local_time,
        })
    }
}

fn check_start(x: &[f64], drift: &DriftSpec, noise: &NoisePath) -> Result<()> {
    let d = drift.dim();
    if x.len() != d || noise.dim() != d {
        return Err(invalid(format!(
            "dimension mismatch: start {}, drift {d}, noise {}",
            x.len(),
            noise.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("start point must be finite"));
    }
    if !(x[d - 1] >= 0.0) {
        return Err(invalid(format!(
            "start point {x:?} lies outside the half-space"
        )));
    }
    Ok(())
}

/// Solves the reflected equation from `x` driven by `noise`.
pub fn solve_rsde(x: &[f64], drift: &DriftSpec, noise: &NoisePath) -> Result<ReflectedPath> {
    check_start(x, drift, noise)?;
    let d = drift.dim();
    let grid = *noise.grid();
    let n = grid.n_steps();
    let dt = grid.dt();

    let mut states = vec![0.0; (n + 1) * d];
    let mut local_time = vec![0.0; n + 1];
    states[..d].copy_from_slice(x);

    let mut reflector = Reflector::new();
    let mut free = x[d - 1];
    let mut a = vec![0.0; d];
    for k in 0..n {
        let (cur, next) = states[k * d..(k + 2) * d].split_at_mut(d);
        drift.eval(cur, &mut a);
        let dw = noise.increment(k);
        for i in 0..d - 1 {
            next[i] = cur[i] + a[i] * dt + dw[i];
        }
        free = free + a[d - 1] * dt + dw[d - 1];
        let (v, l) = reflector.push(free);
        next[d - 1] = v;
        local_time[k + 1] = l;
    }
    Ok(ReflectedPath {
        grid,
        dim: d,
        start: x.to_vec(),
        states,
        local_time,
    })
}

/// Solves from every start under the same noise; output order follows `xs`.
pub fn solve_rsde_shared(
    xs: &[Vec<f64>],
    drift: &DriftSpec,
    noise: &NoisePath,
) -> Result<Vec<ReflectedPath>> {
    xs.par_iter().map(|x| solve_rsde(x, drift, noise)).collect()
}

/// `max_k ‖φ_{t_k}(x¹) − φ_{t_k}(x²)‖ / ‖x¹ − x²‖` for two paths under shared noise.
pub fn lipschitz_ratio(a: &ReflectedPath, b: &ReflectedPath) -> f64 {
    let dist = |u: &[f64], v: &[f64]| {
        u.iter()
            .zip(v)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    };
    let base = dist(a.start(), b.start());
    if base == 0.0 {
        return 0.0;
    }
    (0..a.grid().len())
        .map(|k| dist(a.state(k), b.state(k)))
        .fold(0.0, f64::max)
        / base
}
