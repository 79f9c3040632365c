//! The planar flow with drift `a(x) = A x`, `A = [[1, 1], [1, 1]]`.
//!
//! Here `e^{As}` is explicit and `P e^{As} P` has the single entry
//! `g(s) = (e^{2s} + 1)/2`, so the `(1,1)` entry of the derivative is the
//! scalar product `f_t = g(σ) ∏ g(τ_k − σ_k) g(t − τ(t))` over the pieces of
//! `[0, t]` cut at boundary visits. Since `g(a + b) − g(a) g(b) =
//! (e^{2a} − 1)(e^{2b} − 1)/4 > 0`, removing a zero strictly increases `f`.
//! Shared-noise starts with larger `x_1` have fewer zeros, so `f_t(·, x_2)`
//! is non-decreasing and jumps wherever a zero disappears.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{invalid, Error, Result};
use crate::excursion::ExcursionDecomposition;
use crate::format::fmt_f64;
use crate::grid::TimeGrid;
use crate::matrix::SquareMatrix;
use crate::noise::{sample_noise, NoiseKey};
use crate::rsde::solve_rsde;

/// `g(s) = (e^{2s} + 1)/2`, the `(1,1)` entry of `e^{As}`.
pub fn factor(s: f64) -> f64 {
    1.0 + 0.5 * (2.0 * s).exp_m1()
}

/// `e^{At} = [[(e^{2t}+1)/2, (e^{2t}−1)/2], [(e^{2t}−1)/2, (e^{2t}+1)/2]]`.
pub fn exp_closed_form(t: f64) -> SquareMatrix {
    let s = 0.5 * (2.0 * t).exp_m1();
    SquareMatrix::from_rows(&[[1.0 + s, s], [s, 1.0 + s]]).expect("finite for moderate t")
}

/// Increase of `g(a) g(b)` when the two pieces merge: `(e^{2a} − 1)(e^{2b} − 1)/4`.
pub fn merge_gain(a: f64, b: f64) -> f64 {
    0.25 * (2.0 * a).exp_m1() * (2.0 * b).exp_m1()
}

/// `f_t(x)` from the excursion structure of `φ²(x)`.
pub fn f_closed_form(dec: &ExcursionDecomposition, t: f64) -> Result<f64> {
    let grid = dec.grid();
    if !(t >= 0.0) || t > grid.t_end() * (1.0 + 1e-12) {
        return Err(invalid(format!("time {t} outside [0, {}]", grid.t_end())));
    }
    let k = grid.index_at_or_before(t).expect("t >= 0");
    let Some(last) = dec.last_zero_index(k) else {
        return Ok(factor(t));
    };
    let sigma = grid.time(dec.first_zero().expect("has a zero"));
    // left fold in time order, so a zero at `t` (a trailing factor g(0) = 1)
    // leaves the rounding unchanged
    let inner = dec
        .intervals()
        .iter()
        .filter(|e| e.completed_by(k))
        .fold(factor(sigma), |acc, e| acc * factor(dec.length(e)));
    // the last piece is measured in steps like the excursions
    let tail = grid.span(k - last) + (t - grid.time(k));
    Ok(inner * factor(tail))
}

/// `∏ (e^{a_i} + 1)/2` against `(e^{Σ a_i} + 1)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Report {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Checks `∏ (e^{a_i}+1)/2 < (e^{Σ a_i}+1)/2`, strict for two or more terms.
///
/// The comparison is made between logarithms computed with `ln_1p`/`exp_m1`,
/// which keeps the relative gap resolvable for small `a_i`.
pub fn lemma4_check(a: &[f64]) -> Result<Lemma4Report> {
    if a.is_empty() {
        return Err(invalid("need at least one value"));
    }
    if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(invalid(format!(
            "values must be positive and finite, got {v}"
        )));
    }
    let log_g = |s: f64| (0.5 * s.exp_m1()).ln_1p();
    let log_lhs: f64 = a.iter().map(|&s| log_g(s)).sum();
    let log_rhs = log_g(a.iter().sum());
    let lhs = log_lhs.exp();
    let rhs = log_rhs.exp();
    let margin = lhs * (log_rhs - log_lhs).exp_m1();
    if a.len() >= 2 && !(log_lhs < log_rhs) {
        return Err(Error::NotStrict { lhs, rhs });
    }
    Ok(Lemma4Report { lhs, rhs, margin })
}

/// One shared-noise scan of `x_1 ↦ f_t(x_1, x_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub n_points: usize,
    pub x2: f64,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            x1_lo: 0.0,
            x1_hi: 1.0,
            n_points: 512,
            x2: 0.1,
            t: 1.0,
            dt: 1e-4,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<TimeGrid> {
        if !(self.x2.is_finite() && self.x2 > 0.0) {
            return Err(invalid(format!("x2 must be positive, got {}", self.x2)));
        }
        if self.n_points < 3 {
            return Err(invalid("a scan needs at least 3 points"));
        }
        if !(self.x1_lo.is_finite() && self.x1_hi.is_finite() && self.x1_lo < self.x1_hi) {
            return Err(invalid(format!(
                "bad x1 range [{}, {}]",
                self.x1_lo, self.x1_hi
            )));
        }
        TimeGrid::with_step(self.t, self.dt)
    }

    /// `x1_k = lo + k (hi − lo)/n`; grids whose sizes differ by powers of two nest exactly.
    pub fn x1_grid(&self) -> Vec<f64> {
        let n = self.n_points as f64;
        (0..self.n_points)
            .map(|k| self.x1_lo + k as f64 * (self.x1_hi - self.x1_lo) / n)
            .collect()
    }
}

/// An adjacent-point increase of `f` above the local threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Index of the left grid point.
    pub index: usize,
    pub x1_left: f64,
    pub x1_right: f64,
    pub size: f64,
    /// Largest single-merge gain over the zeros lost between the two starts.
    pub lower_bound: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub config: ScanConfig,
    pub x1_grid: Vec<f64>,
    pub f_values: Vec<f64>,
    /// Whether `σ(x) < t` at grid resolution.
    pub hits: Vec<bool>,
    pub jumps: Vec<Jump>,
    pub hit_fraction: f64,
    /// Adjacent pairs with `f` decreasing.
    pub monotonicity_violations: usize,
    /// Pairs that lost a zero without a strict increase of `f`.
    pub merge_sign_violations: usize,
    /// Pairs where the larger start has a zero the smaller one lacks.
    pub inclusion_violations: usize,
    /// Jumps smaller than their merge lower bound.
    pub bound_violations: usize,
    /// No start reaches the boundary before `t`.
    pub vacuous: bool,
}

impl ScanReport {
    /// Jumps whose left point reaches the boundary.
    pub fn jumps_among_hits(&self) -> usize {
        self.jumps.iter().filter(|j| self.hits[j.index]).count()
    }

    /// CSV `x1,f,jump_flag`; the flag marks the left point of each jump.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut flags = vec![false; self.x1_grid.len()];
        for j in &self.jumps {
            flags[j.index] = true;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x1", "f", "jump_flag"])?;
        for ((x, f), flag) in self.x1_grid.iter().zip(&self.f_values).zip(flags) {
            w.write_record([fmt_f64(*x), fmt_f64(*f), u8::from(flag).to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn summary(&self) -> ScanSummary {
        ScanSummary {
            config: self.config,
            hit_fraction: self.hit_fraction,
            jumps: self.jumps.clone(),
            jumps_among_hits: self.jumps_among_hits(),
            monotonicity_violations: self.monotonicity_violations,
            merge_sign_violations: self.merge_sign_violations,
            inclusion_violations: self.inclusion_violations,
            bound_violations: self.bound_violations,
            vacuous: self.vacuous,
        }
    }
}

/// JSON companion of the scan CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub config: ScanConfig,
    pub hit_fraction: f64,
    pub jumps: Vec<Jump>,
    pub jumps_among_hits: usize,
    pub monotonicity_violations: usize,
    pub merge_sign_violations: usize,
    pub inclusion_violations: usize,
    pub bound_violations: usize,
    pub vacuous: bool,
}

/// Half-width of the window used for the local trend of adjacent differences.
const TREND_WINDOW: usize = 8;
/// A difference counts as a jump above this multiple of the local trend.
const TREND_FACTOR: f64 = 5.0;
/// Absolute floor of the jump threshold.
const JUMP_FLOOR: f64 = 1e-3;

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Zero grid indices of `φ²` for every start, all driven by one noise path.
fn zero_sets(cfg: &ScanConfig, grid: TimeGrid, xs: &[f64]) -> Result<Vec<Vec<usize>>> {
    let noise = sample_noise(grid, 2, NoiseKey::new(cfg.seed))?;
    let drift = DriftSpec::symmetric_example();
    xs.par_iter()
        .map(|&x1| {
            let path = solve_rsde(&[x1, cfg.x2], &drift, &noise)?;
            Ok(path
                .states()
                .iter()
                .skip(1)
                .step_by(2)
                .enumerate()
                .filter(|(_, &v)| v == 0.0)
                .map(|(k, _)| k)
                .collect())
        })
        .collect()
}

/// Largest single-merge gain over the zeros of `from` that `to` lacks.
fn merge_bound(grid: &TimeGrid, from: &[usize], to: &[usize], t: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, &z) in from.iter().enumerate() {
        if to.binary_search(&z).is_ok() {
            continue;
        }
        let p = if i == 0 { 0.0 } else { grid.time(from[i - 1]) };
        let q = from.get(i + 1).map_or(t, |&n| grid.time(n));
        let zt = grid.time(z);
        let gain = merge_gain(zt - p, q - zt);
        best = Some(best.map_or(gain, |b: f64| b.max(gain)));
    }
    best
}

/// Simulates every start under one noise and locates the jumps of `f_t(·, x_2)`.
pub fn scan_discontinuity(cfg: &ScanConfig) -> Result<ScanReport> {
    let grid = cfg.validate()?;
    let n = cfg.n_points;
    let xs = cfg.x1_grid();
    let zeros = zero_sets(cfg, grid, &xs)?;
    let f_values = zeros
        .iter()
        .map(|z| {
            f_closed_form(
                &ExcursionDecomposition::from_zeros(&grid, z.clone())?,
                cfg.t,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let hits: Vec<bool> = zeros
        .iter()
        .map(|z| z.first().is_some_and(|&k| k < grid.n_steps()))
        .collect();
    let diffs: Vec<f64> = f_values.windows(2).map(|w| w[1] - w[0]).collect();

    let mut report = ScanReport {
        config: *cfg,
        x1_grid: xs.clone(),
        f_values: f_values.clone(),
        hit_fraction: hits.iter().filter(|&&h| h).count() as f64 / n as f64,
        vacuous: !hits.iter().any(|&h| h),
        hits,
        jumps: Vec::new(),
        monotonicity_violations: 0,
        merge_sign_violations: 0,
        inclusion_violations: 0,
        bound_violations: 0,
    };
    for (k, &dk) in diffs.iter().enumerate() {
        if dk < 0.0 {
            report.monotonicity_violations += 1;
        }
        let (lo, hi) = (&zeros[k], &zeros[k + 1]);
        let nested = hi.iter().all(|z| lo.binary_search(z).is_ok());
        if !nested {
            report.inclusion_violations += 1;
        }
        let bound = merge_bound(&grid, lo, hi, cfg.t);
        if bound.is_some_and(|b| b > 0.0) && nested && !(dk > 0.0) {
            report.merge_sign_violations += 1;
        }
        let window: Vec<f64> = (k.saturating_sub(TREND_WINDOW)..=(k + TREND_WINDOW).min(n - 2))
            .filter(|&j| j != k)
            .map(|j| diffs[j].abs())
            .collect();
        let threshold = (TREND_FACTOR * median(window)).max(JUMP_FLOOR);
        if dk > threshold {
            let lower_bound = if nested { bound.unwrap_or(0.0) } else { 0.0 };
            if dk < lower_bound - 1e-9 * f_values[k + 1] {
                report.bound_violations += 1;
            }
            report.jumps.push(Jump {
                index: k,
                x1_left: xs[k],
                x1_right: xs[k + 1],
                size: dk,
                lower_bound,
                threshold,
            });
        }
    }
    Ok(report)
}

/// The strip `[x1_lo, x1_hi] × {x2}` scanned for every seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x1_lo: f64,
    pub x1_hi: f64,
    pub x2: f64,
    pub n_points: usize,
    /// Number of consecutive blocks the hit region is cut into.
    pub n_subintervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub hit_points: usize,
    pub jumps_among_hits: usize,
    pub subintervals: usize,
    pub subintervals_with_jump: usize,
    pub monotonicity_violations: usize,
}

impl SeedOutcome {
    pub fn vacuous(&self) -> bool {
        self.hit_points == 0
    }

    pub fn every_subinterval_jumps(&self) -> bool {
        self.subintervals > 0 && self.subintervals_with_jump == self.subintervals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondiffSummary {
    pub region: Region,
    pub t: f64,
    pub dt: f64,
    pub n_seeds: usize,
    pub vacuous_seeds: usize,
    pub seeds_with_jump: usize,
    pub seeds_every_subinterval: usize,
    /// `seeds_every_subinterval / n_seeds`.
    pub fraction_every_subinterval: f64,
    /// No seed reached the boundary: nothing was tested.
    pub vacuous: bool,
    pub per_seed: Vec<SeedOutcome>,
}

impl SeedOutcome {
    /// Cuts the hit part of a scan into `n_subintervals` consecutive blocks of
    /// at least two points and counts the blocks containing a jump.
    pub fn from_report(report: &ScanReport, n_subintervals: usize) -> Self {
        let hit_idx: Vec<usize> = (0..report.hits.len()).filter(|&k| report.hits[k]).collect();
        let blocks = n_subintervals.min(hit_idx.len() / 2);
        let with_jump = (0..blocks)
            .filter(|&b| {
                let lo = hit_idx[b * hit_idx.len() / blocks];
                let hi = hit_idx[(b + 1) * hit_idx.len() / blocks - 1];
                report.jumps.iter().any(|j| j.index >= lo && j.index < hi)
            })
            .count();
        Self {
            seed: report.config.seed,
            hit_points: hit_idx.len(),
            jumps_among_hits: report.jumps_among_hits(),
            subintervals: blocks,
            subintervals_with_jump: with_jump,
            monotonicity_violations: report.monotonicity_violations,
        }
    }
}

impl NondiffSummary {
    pub fn from_outcomes(region: Region, t: f64, dt: f64, per_seed: Vec<SeedOutcome>) -> Self {
        let n_seeds = per_seed.len();
        let vacuous_seeds = per_seed.iter().filter(|s| s.vacuous()).count();
        let seeds_every_subinterval = per_seed
            .iter()
            .filter(|s| s.every_subinterval_jumps())
            .count();
        Self {
            region,
            t,
            dt,
            n_seeds,
            vacuous_seeds,
            seeds_with_jump: per_seed.iter().filter(|s| s.jumps_among_hits > 0).count(),
            seeds_every_subinterval,
            fraction_every_subinterval: if n_seeds == 0 {
                0.0
            } else {
                seeds_every_subinterval as f64 / n_seeds as f64
            },
            vacuous: vacuous_seeds == n_seeds,
            per_seed,
        }
    }
}

/// For seeds `first_seed .. first_seed + n_seeds`, checks that the hit part of
/// the strip, and each of its consecutive blocks, contains a jump of `f_t`.
pub fn nondifferentiability_experiment(
    region: &Region,
    t: f64,
    dt: f64,
    first_seed: u64,
    n_seeds: usize,
) -> Result<NondiffSummary> {
    if region.n_subintervals == 0 {
        return Err(invalid("need at least one sub-interval"));
    }
    let per_seed = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = ScanConfig {
                x1_lo: region.x1_lo,
                x1_hi: region.x1_hi,
                n_points: region.n_points,
                x2: region.x2,
                t,
                dt,
                seed: first_seed + i,
            };
            Ok(SeedOutcome::from_report(
                &scan_discontinuity(&cfg)?,
                region.n_subintervals,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NondiffSummary::from_outcomes(*region, t, dt, per_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::mat_exp;

    #[test]
    fn closed_form_matches_exponential() {
        let a = crate::drift::example_matrix();
        for t in [0.1, 0.5, 1.0, 2.0] {
            let e = mat_exp(&a, t).unwrap();
            let c = exp_closed_form(t);
            for (x, y) in e.as_slice().iter().zip(c.as_slice()) {
                assert!((x - y).abs() <= 1e-12 * y.abs());
            }
        }
    }

    #[test]
    fn f_without_hit_and_with_empty_product() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let none = ExcursionDecomposition::from_zeros(&g, vec![]).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert!((f_closed_form(&none, 1.0).unwrap() - (e2 + 1.0) / 2.0).abs() < 1e-14);
        let one = ExcursionDecomposition::from_zeros(&g, vec![50]).unwrap();
        let want = ((1f64.exp() + 1.0) / 2.0).powi(2);
        assert!((f_closed_form(&one, 1.0).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn f_with_one_excursion() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let dec = ExcursionDecomposition::from_zeros(&g, vec![50, 70, 90]).unwrap();
        let h = |s: f64| ((2.0 * s).exp() + 1.0) / 2.0;
        let want = h(0.5) * h(0.2) * h(0.2) * h(0.1);
        assert!((f_closed_form(&dec, 1.0).unwrap() - want).abs() < 1e-13 * want);
    }

    #[test]
    fn lemma4_examples() {
        let r = lemma4_check(&[1.0, 1.0]).unwrap();
        let e = 1f64.exp();
        assert!((r.lhs - ((e + 1.0) / 2.0).powi(2)).abs() < 1e-12);
        assert!((r.rhs - (e * e + 1.0) / 2.0).abs() < 1e-12);
        assert!((r.margin - (r.rhs - r.lhs)).abs() < 1e-12);

        let single = lemma4_check(&[0.3]).unwrap();
        assert_eq!(single.lhs, single.rhs);
        assert_eq!(single.margin, 0.0);

        let geometric: Vec<f64> = (1..=20).map(|n| 0.5f64.powi(n)).collect();
        let r = lemma4_check(&geometric).unwrap();
        assert!(r.margin > 0.0 && r.lhs < (1f64.exp() + 1.0) / 2.0);

        assert!(lemma4_check(&[1.0, 0.0]).is_err());
        assert!(lemma4_check(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn merge_gain_is_the_product_defect() {
        for (a, b) in [(0.1, 0.2), (0.5, 0.5), (1e-3, 0.7)] {
            let direct = factor(a + b) - factor(a) * factor(b);
            assert!((direct - merge_gain(a, b)).abs() < 1e-14);
        }
    }

    #[test]
    fn short_horizon_far_from_boundary_is_flat() {
        let cfg = ScanConfig {
            x1_lo: 0.0,
            x1_hi: 1.0,
            n_points: 16,
            x2: 5.0,
            t: 0.01,
            dt: 1e-4,
            seed: 3,
        };
        let r = scan_discontinuity(&cfg).unwrap();
        assert!(r.vacuous && r.jumps.is_empty());
        for f in &r.f_values {
            assert_eq!(*f, factor(0.01));
        }
    }

    #[test]
    fn scan_is_monotone_and_reproducible() {
        let cfg = ScanConfig {
            n_points: 64,
            dt: 1e-3,
            seed: 17,
            ..ScanConfig::default()
        };
        let a = scan_discontinuity(&cfg).unwrap();
        let b = scan_discontinuity(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.monotonicity_violations, 0);
        assert_eq!(a.merge_sign_violations, 0);
        assert_eq!(a.bound_violations, 0);
    }
}
