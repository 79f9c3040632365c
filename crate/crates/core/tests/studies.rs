//! Refinement studies and cross-checks between independent computations.

use rflow_core::derivative::{
    derivative_for_flow, finite_difference, jacobian_path, product_formula, system_residual, Method,
};
use rflow_core::example2d::{
    f_closed_form, nondifferentiability_experiment, scan_discontinuity, Region, ScanConfig,
};
use rflow_core::{decompose, sample_noise, solve_rsde, DriftSpec, NoiseKey, TimeGrid};

fn reflected_bm(seed: u64, dt: f64) -> (TimeGrid, Vec<f64>) {
    let grid = TimeGrid::with_step(1.0, dt).unwrap();
    let noise = sample_noise(grid, 1, NoiseKey::new(seed)).unwrap();
    let path = solve_rsde(&[0.0], &DriftSpec::zero(1), &noise).unwrap();
    (grid, path.boundary_coordinate())
}

#[test]
fn zero_set_measure_shrinks_under_refinement() {
    let mean_measure = |dt: f64| {
        (0..20)
            .map(|seed| {
                let (grid, beta) = reflected_bm(seed, dt);
                decompose(&grid, &beta).unwrap().zero_set_measure()
            })
            .sum::<f64>()
            / 20.0
    };
    let m: Vec<f64> = [1e-2, 1e-3, 1e-4].into_iter().map(mean_measure).collect();
    assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    assert!(m[2] < 0.05, "{m:?}");
}

#[test]
fn tail_mass_matches_a_recount() {
    let (grid, beta) = reflected_bm(8, 1e-4);
    let dec = decompose(&grid, &beta).unwrap();
    let min_length = 10.0 * grid.dt();
    // independent recount: runs of positive values between two zeros
    let zeros: Vec<usize> = (0..beta.len()).filter(|&k| beta[k] == 0.0).collect();
    let recount: f64 = zeros
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 * grid.dt())
        .filter(|&len| len < min_length)
        .sum();
    let truncation = dec.truncate(min_length).unwrap();
    assert!((truncation.tail_mass - recount).abs() < 1e-12);
    let everything = dec.truncate(2.0).unwrap();
    let completed: f64 = dec
        .intervals()
        .iter()
        .filter(|e| e.end.is_some())
        .map(|e| dec.length(e))
        .sum();
    assert!(everything
        .decomposition
        .intervals()
        .iter()
        .all(|e| e.end.is_none()));
    assert!((everything.tail_mass - completed).abs() < 1e-12);
}

#[test]
fn derivative_solutions_satisfy_the_system() {
    let grid = TimeGrid::with_step(1.0, 1e-3).unwrap();
    let drift = DriftSpec::symmetric_example();
    let tol = 1e-8;
    for seed in 0..10 {
        let noise = sample_noise(grid, 2, NoiseKey::new(300 + seed)).unwrap();
        let path = solve_rsde(&[0.3, 0.05], &drift, &noise).unwrap();
        let alpha = jacobian_path(&path, &drift).unwrap();
        let dec = decompose(&grid, &path.boundary_coordinate()).unwrap();
        for method in [Method::picard(), Method::product()] {
            let sol = derivative_for_flow(&path, &drift, method).unwrap();
            let r = system_residual(&alpha, &dec, &sol.gamma, &sol.gamma_left).unwrap();
            // the product is exact only up to its trapezoid-vs-propagator gap
            let limit = if sol.method.name() == "picard" {
                10.0 * tol
            } else {
                1e-4
            };
            assert!(r.max() <= limit, "seed {seed} {}: {r:?}", sol.method.name());
        }
    }
}

#[test]
fn product_formula_matches_the_closed_form_and_the_grid_solver() {
    let grid = TimeGrid::with_step(1.0, 1e-3).unwrap();
    let drift = DriftSpec::symmetric_example();
    for seed in 0..10 {
        let noise = sample_noise(grid, 2, NoiseKey::new(500 + seed)).unwrap();
        let path = solve_rsde(&[-0.2, 0.02], &drift, &noise).unwrap();
        let alpha = jacobian_path(&path, &drift).unwrap();
        let dec = decompose(&grid, &path.boundary_coordinate()).unwrap();
        let sol = derivative_for_flow(&path, &drift, Method::product()).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let eval = product_formula(&alpha, &dec, t, 0.0).unwrap();
            let f = f_closed_form(&dec, t).unwrap();
            assert!(
                (eval.matrix[(0, 0)] - f).abs() <= 1e-9 * f,
                "seed {seed} t {t}"
            );
            let k = grid.index_of(t).unwrap();
            assert!(eval.matrix.max_abs_diff(sol.at(k)) <= 1e-9 * f);
        }
    }
}

#[test]
fn finite_difference_agrees_away_from_the_critical_set() {
    let drift = DriftSpec::symmetric_example();
    let mut checked = 0;
    for seed in 0..20 {
        for dt in [1e-3, 1e-4] {
            let grid = TimeGrid::with_step(1.0, dt).unwrap();
            let noise = sample_noise(grid, 2, NoiseKey::new(700 + seed)).unwrap();
            let x = [0.1, 0.1];
            let path = solve_rsde(&x, &drift, &noise).unwrap();
            let sol = derivative_for_flow(&path, &drift, Method::product()).unwrap();
            let h = 1e-4;
            let fd = finite_difference(&x, h, 0, &drift, &noise, 1.0).unwrap();
            if fd.near_critical {
                continue;
            }
            checked += 1;
            let exact = sol.last()[(0, 0)];
            assert!(
                (fd.column[0] - exact).abs() <= 1e-2 * exact.max(1.0),
                "seed {seed} dt {dt}"
            );
        }
    }
    assert!(
        checked >= 10,
        "only {checked} runs away from the critical set"
    );
}

#[test]
fn coarse_jumps_contain_fine_jumps() {
    for seed in [1, 2, 3] {
        let base = ScanConfig {
            x1_lo: -1.0,
            x1_hi: 1.0,
            x2: 0.1,
            t: 1.0,
            dt: 1e-3,
            seed,
            n_points: 128,
        };
        let coarse = scan_discontinuity(&base).unwrap();
        let fine = scan_discontinuity(&ScanConfig {
            n_points: 1024,
            ..base
        })
        .unwrap();
        // the 128-point grid is every eighth point of the 1024-point grid
        for (i, &x) in coarse.x1_grid.iter().enumerate() {
            assert_eq!(x, fine.x1_grid[8 * i]);
            assert_eq!(coarse.f_values[i], fine.f_values[8 * i]);
        }
        for j in &coarse.jumps {
            let inside = fine
                .f_values
                .windows(2)
                .enumerate()
                .skip(8 * j.index)
                .take(8)
                .any(|(_, w)| w[1] > w[0]);
            assert!(
                inside,
                "seed {seed}: no fine increase under coarse jump at {}",
                j.x1_left
            );
        }
        assert_eq!(
            coarse.monotonicity_violations + fine.monotonicity_violations,
            0
        );
        assert_eq!(coarse.inclusion_violations + fine.inclusion_violations, 0);
    }
}

#[test]
fn nondifferentiability_experiment_is_reproducible() {
    let region = Region {
        x1_lo: -1.0,
        x1_hi: 1.0,
        x2: 0.05,
        n_points: 64,
        n_subintervals: 2,
    };
    let a = nondifferentiability_experiment(&region, 1.0, 1e-3, 10, 6).unwrap();
    let b = nondifferentiability_experiment(&region, 1.0, 1e-3, 10, 6).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert!(!a.vacuous);
    assert!(a.seeds_with_jump > 0);
    assert!(a.per_seed.iter().all(|s| s.monotonicity_violations == 0));
}

#[test]
fn deep_interior_region_is_vacuous() {
    let region = Region {
        x1_lo: 0.0,
        x1_hi: 1.0,
        x2: 5.0,
        n_points: 16,
        n_subintervals: 4,
    };
    let summary = nondifferentiability_experiment(&region, 0.01, 1e-3, 0, 5).unwrap();
    assert!(summary.vacuous);
    assert_eq!(summary.vacuous_seeds, 5);
    assert_eq!(summary.seeds_with_jump, 0);
    let report = scan_discontinuity(&ScanConfig {
        x2: 5.0,
        t: 0.01,
        dt: 1e-3,
        n_points: 16,
        ..ScanConfig::default()
    })
    .unwrap();
    let g = 1.0 + 0.5 * (0.02f64).exp_m1();
    assert!(report.f_values.iter().all(|&f| f == g));
    assert!(report.jumps.is_empty());
}
