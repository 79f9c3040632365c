//! The `simulate`, `derivative` and `scan` experiments.
//!
//! Every command validates its configuration first, computes all results in a
//! worker pool, and only then writes files from a single thread in a fixed
//! order, so outputs do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rflow_core::derivative::{
    derivative_for_flow, jacobian_path, solve_product, sup_distance, system_residual,
    DerivativeSolution, Method, MethodReport, SystemResidual,
};
use rflow_core::example2d::{scan_discontinuity, NondiffSummary, SeedOutcome};
use rflow_core::excursion::decompose;
use rflow_core::{sample_noise, solve_rsde, Error as CoreError, NoiseKey, ReflectedPath};
use serde::Serialize;

use crate::config::{ExperimentConfig, MethodChoice};
use crate::error::{CliError, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_dir(base: &Path, sub: &str) -> Result<PathBuf> {
    let dir = base.join(sub);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Every `(seed, start index)` pair in output order.
fn runs(cfg: &ExperimentConfig) -> Vec<(u64, usize)> {
    cfg.seeds
        .iter()
        .flat_map(|&s| (0..cfg.starts.len()).map(move |i| (s, i)))
        .collect()
}

fn simulate_one(cfg: &ExperimentConfig, seed: u64, start: usize) -> Result<ReflectedPath> {
    let grid = cfg.grid()?;
    let drift = cfg.drift.build(cfg.dimension)?;
    let noise = sample_noise(grid, cfg.dimension, NoiseKey::new(seed))?;
    Ok(solve_rsde(&cfg.starts[start], &drift, &noise)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub seed: u64,
    pub start: Vec<f64>,
    pub file: String,
    /// First hit time, `null` if the path stays off the boundary.
    pub sigma: Option<f64>,
    pub excursions: usize,
    pub local_time_end: f64,
}

fn path_record(path: &ReflectedPath, seed: u64, file: String) -> Result<PathRecord> {
    let dec = decompose(path.grid(), &path.boundary_coordinate())?;
    Ok(PathRecord {
        seed,
        start: path.start().to_vec(),
        file,
        sigma: dec.first_zero().map(|k| path.grid().time(k)),
        excursions: dec.intervals().len(),
        local_time_end: *path.local_time().last().expect("non-empty grid"),
    })
}

/// Writes one path CSV per `(seed, start)` and a `summary.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<PathRecord>> {
    cfg.validate()?;
    if cfg.starts.is_empty() {
        return Err(CliError::Config(
            "simulate needs at least one start point".into(),
        ));
    }
    let pool = cfg.thread_pool()?;
    let results: Vec<(String, Vec<u8>, PathRecord)> = pool.install(|| {
        runs(cfg)
            .into_par_iter()
            .map(|(seed, i)| {
                let path = simulate_one(cfg, seed, i)?;
                let name = format!("path_seed{seed}_start{i}.csv");
                let mut bytes = Vec::new();
                path.write_csv(&mut bytes)?;
                let record = path_record(&path, seed, name.clone())?;
                Ok((name, bytes, record))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let dir = prepare_dir(&cfg.out, "simulate")?;
    let mut records = Vec::new();
    for (name, bytes, record) in results {
        let file = dir.join(&name);
        write_file(&file, &bytes)?;
        let reloaded = ReflectedPath::read_csv(fs::File::open(&file).map_err(io_err(&file))?)?;
        reloaded.check_invariants().map_err(|msg| {
            CliError::Core(CoreError::Precondition(format!(
                "{}: {msg}",
                file.display()
            )))
        })?;
        records.push(record);
    }
    write_file(&dir.join("summary.json"), &json_bytes(&records)?)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardRecord {
    pub iterations: usize,
    pub residual: f64,
    pub windows: usize,
    pub system_residual: SystemResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductRecord {
    pub min_length: f64,
    pub tail_bound: f64,
    pub system_residual: SystemResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub min_length: f64,
    pub tail_bound: f64,
    /// Measured sup distance to the product that keeps every excursion.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeRecord {
    pub seed: u64,
    pub start: Vec<f64>,
    pub sigma: Option<f64>,
    pub excursions: usize,
    pub picard: Option<PicardRecord>,
    /// Set when the Picard iteration failed; carries the last residual.
    pub picard_error: Option<PicardFailure>,
    pub product: Option<ProductRecord>,
    /// `sup_t ‖γ_picard(t) − γ_product(t)‖` when both ran.
    pub disagreement: Option<f64>,
    pub sweep: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardFailure {
    pub message: String,
    pub residual: Option<f64>,
}

type DerivativeFiles = Vec<(String, Vec<u8>)>;

fn derivative_one(
    cfg: &ExperimentConfig,
    seed: u64,
    i: usize,
) -> Result<(DerivativeFiles, DerivativeRecord)> {
    let path = simulate_one(cfg, seed, i)?;
    let drift = cfg.drift.build(cfg.dimension)?;
    let alpha = jacobian_path(&path, &drift)?;
    let dec = decompose(path.grid(), &path.boundary_coordinate())?;
    let stem = format!("derivative_seed{seed}_start{i}");
    let mut files = Vec::new();
    let mut record = DerivativeRecord {
        seed,
        start: path.start().to_vec(),
        sigma: dec.first_zero().map(|k| path.grid().time(k)),
        excursions: dec.intervals().len(),
        picard: None,
        picard_error: None,
        product: None,
        disagreement: None,
        sweep: Vec::new(),
    };
    let residual_of =
        |sol: &DerivativeSolution| system_residual(&alpha, &dec, &sol.gamma, &sol.gamma_left);

    let mut picard = None;
    if matches!(
        cfg.derivative.method,
        MethodChoice::Picard | MethodChoice::Both
    ) {
        match derivative_for_flow(&path, &drift, Method::Picard(cfg.picard_options())) {
            Ok(sol) => {
                let MethodReport::Picard {
                    iterations,
                    residual,
                    windows,
                } = sol.method
                else {
                    unreachable!("picard solver reports picard")
                };
                let mut bytes = Vec::new();
                sol.write_csv(&mut bytes, residual)?;
                files.push((format!("{stem}_picard.csv"), bytes));
                record.picard = Some(PicardRecord {
                    iterations,
                    residual,
                    windows,
                    system_residual: residual_of(&sol)?,
                });
                picard = Some(sol);
            }
            Err(e) => {
                let residual = match e {
                    CoreError::Convergence { residual, .. } => Some(residual),
                    _ => None,
                };
                record.picard_error = Some(PicardFailure {
                    message: e.to_string(),
                    residual,
                });
            }
        }
    }

    if matches!(
        cfg.derivative.method,
        MethodChoice::Product | MethodChoice::Both
    ) {
        let sol = derivative_for_flow(&path, &drift, Method::product())?;
        let MethodReport::Product {
            min_length,
            tail_bound,
        } = sol.method
        else {
            unreachable!("product solver reports product")
        };
        let res = residual_of(&sol)?;
        let mut bytes = Vec::new();
        sol.write_csv(&mut bytes, res.max())?;
        files.push((format!("{stem}_product.csv"), bytes));
        record.product = Some(ProductRecord {
            min_length,
            tail_bound,
            system_residual: res,
        });
        for &m in &cfg.derivative.min_lengths {
            let cut = solve_product(&alpha, &dec, m)?;
            let MethodReport::Product { tail_bound, .. } = cut.method else {
                unreachable!("product solver reports product")
            };
            record.sweep.push(SweepRow {
                min_length: m,
                tail_bound,
                distance: sup_distance(&cut.gamma, &sol.gamma),
            });
        }
        if let Some(p) = &picard {
            record.disagreement = Some(sup_distance(&p.gamma, &sol.gamma));
        }
    }
    files.push((format!("{stem}.json"), json_bytes(&record)?));
    Ok((files, record))
}

/// Writes the derivative CSVs and JSON metadata; fails after writing if any Picard run failed.
pub fn cmd_derivative(cfg: &ExperimentConfig) -> Result<Vec<DerivativeRecord>> {
    cfg.validate()?;
    if cfg.starts.is_empty() {
        return Err(CliError::Config(
            "derivative needs at least one start point".into(),
        ));
    }
    let pool = cfg.thread_pool()?;
    let results = pool.install(|| {
        runs(cfg)
            .into_par_iter()
            .map(|(seed, i)| derivative_one(cfg, seed, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = prepare_dir(&cfg.out, "derivative")?;
    let mut records = Vec::new();
    for (files, record) in results {
        for (name, bytes) in files {
            write_file(&dir.join(name), &bytes)?;
        }
        records.push(record);
    }
    let failures = records.iter().filter(|r| r.picard_error.is_some()).count();
    if failures > 0 {
        return Err(CliError::Core(CoreError::Precondition(format!(
            "picard iteration failed for {failures} run(s); see the JSON metadata"
        ))));
    }
    Ok(records)
}

/// Writes `scan_seed{s}.csv`/`.json` per seed and an aggregate `summary.json`.
pub fn cmd_scan(cfg: &ExperimentConfig) -> Result<NondiffSummary> {
    cfg.validate()?;
    let scan = cfg
        .scan
        .as_ref()
        .ok_or_else(|| CliError::Config("scan needs a [scan] section".into()))?;
    let pool = cfg.thread_pool()?;
    let reports = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| Ok(scan_discontinuity(&cfg.scan_config(scan, seed))?))
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = prepare_dir(&cfg.out, "scan")?;
    let mut outcomes = Vec::new();
    for report in &reports {
        let seed = report.config.seed;
        let mut bytes = Vec::new();
        report.write_csv(&mut bytes)?;
        write_file(&dir.join(format!("scan_seed{seed}.csv")), &bytes)?;
        write_file(
            &dir.join(format!("scan_seed{seed}.json")),
            &json_bytes(&report.summary())?,
        )?;
        outcomes.push(SeedOutcome::from_report(report, scan.n_subintervals));
    }
    let t = scan.t.unwrap_or(cfg.t_end);
    let summary = NondiffSummary::from_outcomes(cfg.region(scan), t, cfg.dt, outcomes);
    write_file(&dir.join("summary.json"), &json_bytes(&summary)?)?;
    let violations: usize = reports.iter().map(|r| r.monotonicity_violations).sum();
    if violations > 0 {
        return Err(CliError::Core(CoreError::Precondition(format!(
            "f decreased along x1 at {violations} adjacent pair(s)"
        ))));
    }
    Ok(summary)
}

pub fn describe_path(r: &PathRecord) -> String {
    format!(
        "seed {:>6}  start {:?}  sigma {}  excursions {}  L(T) {:.6}",
        r.seed,
        r.start,
        r.sigma.map_or("none".to_string(), |s| format!("{s:.6}")),
        r.excursions,
        r.local_time_end
    )
}

pub fn describe_derivative(r: &DerivativeRecord) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
    format!(
        "seed {:>6}  start {:?}  excursions {}  disagreement {}  tail bound {}{}",
        r.seed,
        r.start,
        r.excursions,
        fmt(r.disagreement),
        fmt(r.product.as_ref().map(|p| p.tail_bound)),
        r.picard_error
            .as_ref()
            .map_or(String::new(), |e| format!("  picard failed: {}", e.message))
    )
}

pub fn describe_scan(s: &NondiffSummary) -> Vec<String> {
    let mut lines: Vec<String> = s
        .per_seed
        .iter()
        .map(|o| {
            format!(
                "seed {:>6}  hit points {}  jumps among hits {}  blocks with jump {}/{}{}",
                o.seed,
                o.hit_points,
                o.jumps_among_hits,
                o.subintervals_with_jump,
                o.subintervals,
                if o.vacuous() { "  (vacuous)" } else { "" }
            )
        })
        .collect();
    if s.vacuous {
        lines.push(format!(
            "no start reached the boundary before t = {}: the scan is vacuous",
            s.t
        ));
    }
    lines
}
