use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sgd_clt::ensemble::{run_ensemble, EnsembleConfig};
use sgd_clt::linalg::{min_sym_eigenvalue, rel_frob};
use sgd_clt::lyapunov::{lift_sigma, msgd_drift, msgd_limit_cov, residual, solve_general, vsgd_limit_cov};
use sgd_clt::problems::{gradient_fd_error, make_quadratic, NoiseDistribution, NoiseModel, Oracle};
use sgd_clt::schedules::{check_h0_slow, H0_PAIRS};
use sgd_clt::stats::shapiro_wilk;
use sgd_clt::{MethodSpec, Schedule};

const HORIZON: u64 = 50_000;

fn spd(entries: &[f64], n: usize, floor: f64) -> DMatrix<f64> {
    let b = DMatrix::from_iterator(n, n, entries.iter().copied().take(n * n));
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

fn matrix_entries(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(-2.0..2.0f64, n * n), prop::collection::vec(-2.0..2.0f64, n * n))
    })
}

fn passes(s: &Schedule, h0: f64) -> Option<bool> {
    check_h0_slow(s, h0, H0_PAIRS, HORIZON).ok().map(|r| r.passed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn h0_slow_is_monotone(k in 0.05..3.0f64, a in 0.2..=1.0f64, h0 in 0.01..2.0f64, step in 1.0..4.0f64) {
        let s = Schedule::power_law(k, a).unwrap();
        if let (Some(true), Some(larger)) = (passes(&s, h0), passes(&s, h0 * step)) {
            prop_assert!(larger);
        }
    }

    #[test]
    fn h0_slow_survives_bounded_rescaling(k in 0.05..1.0f64, a in 0.2..0.9f64, h0 in 0.05..1.0f64, c1 in 0.3..1.0f64, width in 0.0..1.0f64) {
        let base = Schedule::power_law(k, a).unwrap();
        prop_assume!(passes(&base, h0) == Some(true));
        let c2 = c1 + width;
        let scaled = Schedule::custom("scaled", move |j| {
            let eta = c1 + (c2 - c1) * 0.5 * (1.0 + (j as f64).sin());
            k * (j as f64).powf(-a) * eta
        });
        prop_assert_eq!(passes(&scaled, h0 / c1), Some(true));
    }

    #[test]
    fn lyapunov_solution_is_spd_and_certified((n, b, c) in matrix_entries(8), floor in 0.05..1.0f64, mu in 0.05..2.0f64) {
        let a = spd(&b, n, floor);
        let s = spd(&c, n, 0.05);
        let d0 = 0.9 * min_sym_eigenvalue(&a);
        let sol = solve_general(&a, &s, d0).unwrap();
        prop_assert!(min_sym_eigenvalue(&sol.w) > 0.0);
        prop_assert!(residual(&a, &sol.w, &s, d0) <= 1e-9 * s.norm().max(1.0));
        prop_assert!(rel_frob(&vsgd_limit_cov(&a, &s, d0).unwrap().w, &sol.w) < 1e-8);

        let lifted = solve_general(&msgd_drift(&a, mu), &lift_sigma(&s), 0.0).unwrap();
        prop_assert!(min_sym_eigenvalue(&lifted.w) > 0.0);
        prop_assert!(rel_frob(&msgd_limit_cov(&a, &s, mu).unwrap().w, &lifted.w) < 1e-8);
    }

    #[test]
    fn lyapunov_is_similarity_equivariant((n, b, c) in matrix_entries(6), p in prop::collection::vec(-1.0..1.0f64, 36)) {
        let a = spd(&b, n, 0.2);
        let s = spd(&c, n, 0.1);
        let p = DMatrix::from_iterator(n, n, p.into_iter().take(n * n)) * 0.3 + DMatrix::identity(n, n);
        let p_inv = p.clone().try_inverse().unwrap();
        let w = solve_general(&a, &s, 0.0).unwrap().w;
        let wt = solve_general(&(&p * &a * &p_inv), &(&p * &s * p.transpose()), 0.0).unwrap().w;
        prop_assert!(rel_frob(&wt, &(&p * w * p.transpose())) < 1e-8);
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences((n, b, _) in matrix_entries(6), x in prop::collection::vec(-3.0..3.0f64, 6)) {
        let p = make_quadratic(spd(&b, n, 0.1)).unwrap();
        let pt = DVector::from_iterator(n, x.into_iter().take(n));
        prop_assert!(gradient_fd_error(&p, &[pt]) <= 1e-5);
    }

    #[test]
    fn shapiro_wilk_statistic_in_unit_interval(xs in prop::collection::vec(-1e3..1e3f64, 12..300)) {
        prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-6));
        let (w, p) = shapiro_wilk(&xs).unwrap();
        prop_assert!(w > 0.0 && w <= 1.0);
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ensemble_is_deterministic_across_thread_counts(seed in any::<u64>(), threads in 2..6usize) {
        let oracle = Oracle::new(
            make_quadratic(DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]))).unwrap(),
            NoiseModel::additive(DMatrix::identity(2, 2), NoiseDistribution::Gaussian),
        )
        .unwrap();
        let mut cfg = EnsembleConfig::new(oracle, Schedule::power_law(0.1, 0.5).unwrap(), MethodSpec::MsgdConst { mu_tilde: 0.5 });
        cfg.replicas = 40;
        cfg.n_steps = 2_000;
        cfg.checkpoint_every = 500;
        cfg.master_seed = seed;
        let w = DMatrix::identity(4, 4);
        let run = |t: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| run_ensemble(&cfg, &w).unwrap())
        };
        let (one, many) = (run(1), run(threads));
        for (x, y) in one.checkpoints.iter().zip(&many.checkpoints) {
            prop_assert_eq!(&x.v, &y.v);
            prop_assert_eq!(&x.mean, &y.mean);
        }
    }
}
