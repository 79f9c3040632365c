//! Property tests for the invariants of paths, decompositions and products.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rflow_core::derivative::{ordered_product, pi_map, product_tail_bound};
use rflow_core::example2d::{factor, lemma4_check};
use rflow_core::propagator::StepMaps;
use rflow_core::rsde::lipschitz_ratio;
use rflow_core::{
    decompose, mat_exp, operator_norm, sample_noise, skorokhod_map, solve_propagator, solve_rsde,
    solve_rsde_shared, DriftSpec, ExcursionDecomposition, MatrixPath, NoiseKey, ProjectionPair,
    SquareMatrix, TimeGrid,
};

fn matrix(d: usize, entries: &[f64]) -> SquareMatrix {
    SquareMatrix::from_row_major(d, &entries[..d * d]).unwrap()
}

fn entries(scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, 16)
}

fn zero_set(n: usize) -> impl Strategy<Value = BTreeSet<usize>> {
    prop::collection::btree_set(0..=n, 0..12)
}

fn beta_from(n: usize, zeros: &BTreeSet<usize>, heights: &[f64]) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            if zeros.contains(&k) {
                0.0
            } else {
                heights[k % heights.len()]
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skorokhod_map_is_complementary(
        z0 in 0.0f64..2.0,
        rest in prop::collection::vec(-3.0f64..3.0, 0..200),
    ) {
        let z: Vec<f64> = std::iter::once(z0).chain(rest).collect();
        let (y, l) = skorokhod_map(&z).unwrap();
        for k in 0..z.len() {
            prop_assert!(y[k] >= 0.0);
            prop_assert_eq!(y[k], z[k] + l[k]);
            if k > 0 {
                prop_assert!(l[k] >= l[k - 1]);
                if y[k] > 0.0 {
                    prop_assert_eq!(l[k], l[k - 1]);
                }
            }
        }
    }

    #[test]
    fn reflected_paths_satisfy_their_invariants(
        seed in 0u64..10_000,
        d in 1usize..=3,
        start in prop::collection::vec(-1.0f64..1.0, 3),
        a in entries(1.0),
    ) {
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let noise = sample_noise(grid, d, NoiseKey::new(seed)).unwrap();
        let mut x = start[..d].to_vec();
        x[d - 1] = x[d - 1].abs();
        let drift = DriftSpec::Linear(matrix(d, &a));
        let path = solve_rsde(&x, &drift, &noise).unwrap();
        prop_assert!(path.check_invariants().is_ok());
        let beta = path.boundary_coordinate();
        let l = path.local_time();
        let pushed: f64 = (1..grid.len())
            .filter(|&k| beta[k] > 0.0)
            .map(|k| l[k] - l[k - 1])
            .sum();
        prop_assert_eq!(pushed, 0.0);
    }

    #[test]
    fn flow_is_lipschitz_in_the_start(
        seed in 0u64..10_000,
        x in (-1.0f64..1.0, 0.0f64..0.5),
        shift in (-0.2f64..0.2, 0.0f64..0.2),
    ) {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let noise = sample_noise(grid, 2, NoiseKey::new(seed)).unwrap();
        let drift = DriftSpec::symmetric_example();
        let a = solve_rsde(&[x.0, x.1], &drift, &noise).unwrap();
        let b = solve_rsde(&[x.0 + shift.0, x.1 + shift.1], &drift, &noise).unwrap();
        // sup-norm Gronwall with the reflection constant 2, converted to Euclidean norms
        let row_sum = 2.0;
        let bound = 2.0 * 2f64.sqrt() * (2.0 * row_sum * grid.t_end()).exp();
        prop_assert!(lipschitz_ratio(&a, &b) <= bound);
    }

    #[test]
    fn flow_is_monotone_under_shared_noise(
        seed in 0u64..10_000,
        x in (-1.0f64..1.0, 0.0f64..0.3),
        gap in (0.1f64..0.5, 0.0f64..0.2),
    ) {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let noise = sample_noise(grid, 2, NoiseKey::new(seed)).unwrap();
        let paths = solve_rsde_shared(
            &[vec![x.0, x.1], vec![x.0 + gap.0, x.1 + gap.1]],
            &DriftSpec::symmetric_example(),
            &noise,
        ).unwrap();
        for k in 0..grid.len() {
            let (p, q) = (paths[0].state(k), paths[1].state(k));
            prop_assert!(p[0] < q[0]);
            prop_assert!(p[1] <= q[1]);
        }
    }

    #[test]
    fn decomposition_reconstructs_the_positive_set(
        zeros in zero_set(300),
        heights in prop::collection::vec(1e-6f64..2.0, 1..20),
    ) {
        let grid = TimeGrid::new(1.0, 300).unwrap();
        let beta = beta_from(300, &zeros, &heights);
        let dec = decompose(&grid, &beta).unwrap();
        let positive: Vec<usize> = (0..=300).filter(|&k| beta[k] > 0.0).collect();
        prop_assert_eq!(dec.positive_indices(), positive);
        prop_assert_eq!(dec.zeros().len(), zeros.len());
        let truncated = dec.truncate(0.0).unwrap();
        prop_assert_eq!(&truncated.decomposition, &dec);
        prop_assert_eq!(truncated.tail_mass, 0.0);
        prop_assert_eq!(truncated.decomposition.truncate(0.0).unwrap().decomposition, dec);
    }

    #[test]
    fn pi_map_is_two_lipschitz(
        zeros in zero_set(200),
        d in 2usize..=4,
        seed in any::<u64>(),
    ) {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let dec = ExcursionDecomposition::from_zeros(&grid, zeros.into_iter().collect()).unwrap();
        let path = |salt: u64| {
            MatrixPath::from_fn(grid, |t| {
                let v: Vec<f64> = (0..d * d)
                    .map(|i| ((seed ^ salt).wrapping_mul(i as u64 + 1) as f64 * 1e-19 + 7.0 * t * (i as f64 + 1.0)).sin())
                    .collect();
                SquareMatrix::from_row_major(d, &v).unwrap()
            }).unwrap()
        };
        let (x1, x2) = (path(1), path(2));
        let sup = |a: &MatrixPath, b: &MatrixPath| {
            a.values().iter().zip(b.values()).map(|(p, q)| operator_norm(&(p - q))).fold(0.0, f64::max)
        };
        let lhs = sup(&pi_map(&x1, &dec).unwrap(), &pi_map(&x2, &dec).unwrap());
        prop_assert!(lhs <= 2.0 * sup(&x1, &x2) + 1e-12);
    }

    #[test]
    fn sandwich_is_idempotent(d in 1usize..=4, a in entries(3.0)) {
        let m = matrix(d, &a);
        let proj = ProjectionPair::new(d);
        let s = proj.sandwich(&m);
        prop_assert_eq!(&(&(&proj.p * &s) * &proj.p), &s);
        prop_assert_eq!(&proj.sandwich(&s), &s);
        prop_assert_eq!(&(&proj.p * &proj.p), &proj.p);
    }

    #[test]
    fn scalar_product_ignores_factor_order(
        lengths in prop::collection::vec(1e-4f64..0.5, 1..40),
        rotation in 0usize..40,
    ) {
        let forward: f64 = lengths.iter().map(|&s| factor(s)).product();
        let mut permuted = lengths.clone();
        permuted.reverse();
        permuted.rotate_left(rotation % lengths.len());
        let other: f64 = permuted.iter().map(|&s| factor(s)).product();
        prop_assert!((forward - other).abs() <= 1e-12 * forward);
        prop_assert!(lengths.iter().all(|&s| factor(s) > 1.0));
    }

    #[test]
    fn product_inequality_is_strict(a in prop::collection::vec(1e-3f64..2.0, 2..50)) {
        let r = lemma4_check(&a).unwrap();
        prop_assert!(r.lhs < r.rhs);
        prop_assert!(r.margin > 0.0);
    }

    #[test]
    fn exponential_is_a_semigroup(d in 1usize..=4, a in entries(1.0), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let m = matrix(d, &a);
        let whole = mat_exp(&m, t1 + t2).unwrap();
        let split = &mat_exp(&m, t1).unwrap() * &mat_exp(&m, t2).unwrap();
        prop_assert!(whole.max_abs_diff(&split) <= 1e-9 * operator_norm(&whole).max(1.0));
    }

    #[test]
    fn propagators_compose(
        a0 in entries(1.0),
        a1 in entries(1.0),
        (s, u, t) in (0usize..=400, 0usize..=400, 0usize..=400),
    ) {
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let (m0, m1) = (matrix(3, &a0), matrix(3, &a1));
        let alpha = MatrixPath::from_fn(grid, |t| {
            let mut m = m0.clone();
            m.axpy((5.0 * t).cos(), &m1);
            m
        }).unwrap();
        let mut idx = [s, u, t];
        idx.sort();
        let [s, u, t] = idx.map(|k| grid.time(k));
        let whole = solve_propagator(&alpha, s, t).unwrap().matrix;
        let composed = &solve_propagator(&alpha, u, t).unwrap().matrix
            * &solve_propagator(&alpha, s, u).unwrap().matrix;
        prop_assert!(whole.max_abs_diff(&composed) <= 1e-10);
        let steps = StepMaps::new(&alpha);
        let (i, j) = (grid.index_of(s).unwrap(), grid.index_of(t).unwrap());
        prop_assert!(steps.between(i, j).max_abs_diff(&whole) <= 1e-10);
    }

    #[test]
    fn dropping_factors_stays_within_the_tail_bound(
        gains in prop::collection::vec(0.0f64..0.3, 1..12),
        seed in any::<u64>(),
        keep in prop::collection::vec(any::<bool>(), 12),
    ) {
        let d = 3;
        let proj = ProjectionPair::new(d);
        let factors: Vec<SquareMatrix> = gains.iter().enumerate().map(|(i, &g)| {
            let v: Vec<f64> = (0..9).map(|k| ((seed as f64) * 1e-16 + (i * 9 + k) as f64).sin()).collect();
            let b = proj.sandwich(&SquareMatrix::from_row_major(d, &v).unwrap());
            let norm = operator_norm(&b);
            let mut m = proj.p.clone();
            if norm > 0.0 {
                m.axpy(g / norm, &b);
            }
            m
        }).collect();
        let norms: Vec<f64> = factors.iter().map(|m| operator_norm(&(m - &proj.p))).collect();
        let total: f64 = norms.iter().sum();
        let full = ordered_product(&proj.p, &factors);
        let kept = ordered_product(&proj.p, factors.iter().zip(&keep).filter(|(_, &k)| k).map(|(m, _)| m));
        let dropped: Vec<f64> = norms.iter().zip(&keep).filter(|(_, &k)| !k).map(|(n, _)| *n).collect();
        let err = operator_norm(&(&full - &kept));
        prop_assert!(err <= product_tail_bound(&dropped, total) * (1.0 + 1e-12) + 1e-15);
    }
}
