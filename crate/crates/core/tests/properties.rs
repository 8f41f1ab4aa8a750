use hma_core::geometry::{nm1_root_matrix, nm1_root_spectral, star_power_matrix, star_wedge_matrix};
use hma_core::ma::LinearizedOperator;
use hma_core::synth::{random_positive_matrix, rng, MetricModel, SmoothFunction};
use hma_core::{MetricField, ProblemSpec, RhsVolume, SolveState, TorusGrid, Variant};
use proptest::prelude::*;

fn pair(seed: u64, n: usize) -> (hma_core::HermMatrix, hma_core::HermMatrix) {
    let mut r = rng(seed);
    (random_positive_matrix(&mut r, n, 0.2, 5.0), random_positive_matrix(&mut r, n, 0.2, 5.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_inverts_power(seed in any::<u64>(), n in 2usize..=4) {
        let (g, a) = pair(seed, n);
        let s = star_power_matrix(&g, &a);
        let back = nm1_root_matrix(&g, &s).unwrap();
        prop_assert!((back - a).max_abs() < 1e-10 * a.max_abs());
        let spectral = nm1_root_spectral(&g, &s).unwrap();
        prop_assert!((spectral - a).max_abs() < 1e-9 * a.max_abs());
    }

    #[test]
    fn power_determinant(seed in any::<u64>(), n in 2usize..=4) {
        let (g, a) = pair(seed, n);
        let s = star_power_matrix(&g, &a);
        let (dg, da) = (g.det().re, a.det().re);
        let want = da.powi(n as i32 - 1) / dg.powi(n as i32 - 2);
        prop_assert!((s.det().re - want).abs() < 1e-10 * want);
    }

    #[test]
    fn star_wedge_trace(seed in any::<u64>(), n in 2usize..=4) {
        // tr_g((tr_g α) g - α) = (n-1) tr_g α.
        let (g, a) = pair(seed, n);
        let w = star_wedge_matrix(&g, &a);
        let gi = g.upper().unwrap();
        let (tw, ta) = (gi.contract(&w).re, gi.contract(&a).re);
        prop_assert!((tw - (n as f64 - 1.0) * ta).abs() < 1e-10 * ta.abs());
    }

    #[test]
    fn indefinite_forms_have_no_root(seed in any::<u64>(), n in 2usize..=4) {
        let (g, a) = pair(seed, n);
        let neg = a.scale(-1.0);
        prop_assert!(nm1_root_matrix(&g, &neg).is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn transpose_adjointness(seed in any::<u64>(), phi in any::<bool>()) {
        let grid = TorusGrid::uniform(3, &[0, 3], 8).unwrap();
        let mut r = rng(seed);
        let omega: MetricField = MetricModel::random_trig(&mut r, 3, &[0, 3], 2, 0.3).sample(&grid).unwrap();
        let f = SmoothFunction::random(&mut r, &[0, 3], 2, 1, 0.2).sample(&grid);
        let variant = if phi { Variant::Phi } else { Variant::Psi };
        let spec = ProblemSpec::new(variant, omega.clone(), omega, f, RhsVolume::OmegaN).unwrap();
        let u = SmoothFunction::random(&mut r, &[0, 3], 3, 1, 0.01).sample(&grid);
        let op = LinearizedOperator::new(&spec, &SolveState { u, b: 0.0, t: 1.0 }).unwrap();
        let v = SmoothFunction::random(&mut r, &[0, 3], 3, 2, 1.0).sample(&grid).real_parts();
        let w = SmoothFunction::random(&mut r, &[0, 3], 3, 2, 1.0).sample(&grid).real_parts();
        let lhs: f64 = w.iter().zip(op.apply(&v)).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(op.apply_transpose(&w)).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
