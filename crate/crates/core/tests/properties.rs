mod common;

use delaymargin::chebyshev::CollocationGrid;
use delaymargin::criteria::{a_n_sequence, SeriesVerdict};
use delaymargin::linalg::CVec;
use delaymargin::model::{eval_epsilon_lambda, HistoryGrid, SystemSpec};
use delaymargin::resolvent::{delta_matrix, in_resolvent_set, resolvent_a0, resolvent_blocks};
use delaymargin::roots::{discretize_generator, spectral_abscissa, RootOptions};
use delaymargin::simulator::{integrate, random_history};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_from(seed: u64) -> (SystemSpec, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (common::random_spec(&mut rng), rng)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Smooth history `s ↦ cos(2s) a + e^{0.5 s} b`.
fn smooth_history(rng: &mut ChaCha8Rng, grid: &CollocationGrid, n: usize) -> HistoryGrid {
    let (a, b) = (random_vec(rng, n), random_vec(rng, n));
    HistoryGrid::from_fn(grid.clone(), |s| &a * Complex64::new((2.0 * s).cos(), 0.0) + &b * Complex64::new((0.5 * s).exp(), 0.0)).unwrap()
}

fn lambda_strategy() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -5.0..5.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn symbol_matches_action_on_exponentials(seed in any::<u64>(), lambda in lambda_strategy()) {
        let (spec, mut rng) = spec_from(seed);
        let x = random_vec(&mut rng, spec.n());
        let grid = CollocationGrid::new(spec.max_delay(), 48).unwrap();
        let applied = spec.phi().apply(&eval_epsilon_lambda(lambda, &x, &grid)).unwrap();
        let symbol = spec.phi().symbol(lambda) * &x;
        prop_assert!((applied - &symbol).norm() <= 1e-8 * (1.0 + symbol.norm()));
    }

    #[test]
    fn action_is_linear(seed in any::<u64>(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let (spec, mut rng) = spec_from(seed);
        let grid = CollocationGrid::new(spec.max_delay(), 24).unwrap();
        let f = smooth_history(&mut rng, &grid, spec.n());
        let g = smooth_history(&mut rng, &grid, spec.n());
        let (ca, cb) = (Complex64::new(a, 0.5), Complex64::new(b, -0.25));
        let lhs = spec.phi().apply(&f.combine(ca, &g, cb).unwrap()).unwrap();
        let rhs = spec.phi().apply(&f).unwrap() * ca + spec.phi().apply(&g).unwrap() * cb;
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn symbol_respects_norm_bound(seed in any::<u64>(), lambda in lambda_strategy()) {
        let (spec, _) = spec_from(seed);
        let norm = delaymargin::linalg::spectral_norm(&spec.phi().symbol(lambda));
        prop_assert!(norm <= spec.phi().norm_bound(lambda.re) * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn delta_conjugate_symmetry_for_real_systems(seed in any::<u64>(), lambda in lambda_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_point_spec(&mut rng);
        prop_assert!(spec.is_real());
        let d = delta_matrix(&spec, lambda);
        let dc = delta_matrix(&spec, lambda.conj());
        prop_assert!((dc - d.map(|z| z.conj())).norm() <= 1e-12 * (1.0 + d.norm()));
    }

    #[test]
    fn shift_resolvent_collocation_residual(seed in any::<u64>(), lambda in lambda_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3usize);
        let grid = CollocationGrid::new(1.0, 32).unwrap();
        let f = smooth_history(&mut rng, &grid, n);
        let g = resolvent_a0(lambda, &f);
        let d = grid.diff_matrix();
        prop_assert!(g.values()[grid.degree()].norm() == 0.0);
        for i in 0..grid.degree() {
            let mut deriv = CVec::zeros(n);
            for (j, gj) in g.values().iter().enumerate() {
                deriv += gj * Complex64::new(d[(i, j)], 0.0);
            }
            let residual = (&g.values()[i] * lambda - deriv - &f.values()[i]).norm();
            prop_assert!(residual < 1e-7 * (1.0 + f.max_norm()), "node {i}: {residual}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn block_resolvent_inverts_discretized_generator(seed in any::<u64>(), im in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_point_spec(&mut rng);
        let lambda = Complex64::new(1.0, im);
        let n = spec.n();
        let gen = discretize_generator(&spec, 40).unwrap();
        let f = smooth_history(&mut rng, gen.grid(), n);
        let x = random_vec(&mut rng, n);
        let blocks = resolvent_blocks(&spec, lambda).unwrap();
        let (y, g) = blocks.apply(&x, &f).unwrap();
        prop_assert!((&y - &g.values()[gen.degree()]).norm() <= 1e-10 * (1.0 + y.norm()));
        let stacked = CVec::from_iterator(n * g.values().len(), g.values().iter().flat_map(|v| v.iter().copied()));
        let image = gen.shifted_apply(lambda, &stacked);
        let mut expected = CVec::from_iterator(n * f.values().len(), f.values().iter().flat_map(|v| v.iter().copied()));
        expected.rows_mut(n * gen.degree(), n).copy_from(&x);
        prop_assert!((&image - &expected).norm() <= 1e-6 * (1.0 + expected.norm()), "{}", (&image - &expected).norm());
    }

    #[test]
    fn first_power_bound_below_one_gives_series_pass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_point_spec(&mut rng);
        let res = a_n_sequence(&spec, 0.0, 6).unwrap();
        prop_assert_eq!(res.a_n[0], 1.0);
        if res.a_n[1] < 1.0 {
            prop_assert_eq!(res.verdict, SeriesVerdict::Pass);
            prop_assert!(res.a.unwrap() <= 1.0 / (1.0 - res.a_n[1]) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn simulation_superposition(seed in any::<u64>(), a in -2.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_point_spec(&mut rng);
        let r = spec.max_delay();
        let h1 = random_history(r, spec.n(), seed).unwrap();
        let h2 = random_history(r, spec.n(), seed ^ 1).unwrap();
        let ca = Complex64::new(a, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let sum = h1.combine(ca, &h2, one).unwrap();
        let step = common::DELAY_QUANTUM / 2.0;
        let (t1, t2, ts) = (integrate(&spec, &h1, 4.0, step).unwrap(), integrate(&spec, &h2, 4.0, step).unwrap(), integrate(&spec, &sum, 4.0, step).unwrap());
        for i in 0..ts.len() {
            let lin = t1.state(i) * ca + t2.state(i);
            prop_assert!((ts.state(i) - &lin).norm() <= 1e-10 * (1.0 + lin.norm()));
        }
    }

    #[test]
    fn roots_lie_outside_resolvent_set(seed in any::<u64>()) {
        let (spec, _) = spec_from(seed);
        let rs = spectral_abscissa(&spec, &RootOptions::fast()).unwrap();
        for root in &rs.roots {
            prop_assert!(!in_resolvent_set(&spec, root.lambda).in_resolvent_set, "{}", root.lambda);
        }
        if let Some(top) = rs.rightmost() {
            let shifted = top.lambda + Complex64::new(0.5, 0.0);
            prop_assert!(in_resolvent_set(&spec, shifted).in_resolvent_set);
        }
    }
}
