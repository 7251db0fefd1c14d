use mqlv::bsm::{digital_probability, BsmInputs};
use mqlv::config::ExperimentFile;
use mqlv::experiments::{comparison_csv, run_comparison};
use mqlv::learner::{fit_with_bases, step_bases};
use mqlv::vasicek::{analytic_mean, analytic_var, delta_s, exact_step, from_state, rmse, to_state};
use mqlv::{event_probability, fit, simulate, LearnerConfig, VasicekParams};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn reference_grid(n_paths: usize, seed: u64) -> mqlv::PathGrid {
    simulate(&VasicekParams::reference(), 0.5, 5, n_paths, seed).unwrap()
}

proptest! {
    // fixed seed: the moment bounds are statistical and would flake on fresh draws
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: RngSeed::Fixed(20_240_601),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn simulated_moments_within_four_standard_errors(
        kappa in 0.0f64..2.0,
        b in 0.5f64..1.5,
        sigma in 0.01f64..0.5,
        s0 in 0.5f64..1.5,
        maturity in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let params = VasicekParams::new(kappa, b, sigma, s0).unwrap();
        let grid = simulate(&params, maturity, 4, 10_000, seed).unwrap();
        let n = grid.n_paths() as f64;
        for t in 1..=grid.n_steps() {
            let col = grid.values.column(t);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let v = analytic_var(&params, grid.time(t));
            prop_assert!((mean - analytic_mean(&params, grid.time(t))).abs() <= 4.0 * (v / n).sqrt());
            prop_assert!((var - v).abs() <= 4.0 * v * (2.0 / (n - 1.0)).sqrt());
        }
    }

    #[test]
    fn state_transform_inverts(kappa in 0.0f64..1.0, sigma in 0.0f64..0.5, seed in any::<u64>()) {
        let params = VasicekParams::new(kappa, 1.2, sigma, 0.9).unwrap();
        let grid = simulate(&params, 1.0, 6, 50, seed).unwrap();
        let back = from_state(&to_state(&grid, &params), &params);
        for (a, b) in back.as_slice().iter().zip(grid.values.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn step_continuous_at_zero_kappa(s in -2.0f64..3.0, b in -1.0f64..2.0, sigma in 0.0f64..1.0, dt in 1e-3f64..1.0, z in -4.0f64..4.0) {
        let near = exact_step(s, &VasicekParams::new(1e-9, b, sigma, 1.0).unwrap(), dt, z).unwrap();
        let limit = exact_step(s, &VasicekParams::new(0.0, b, sigma, 1.0).unwrap(), dt, z).unwrap();
        prop_assert!((near - limit).abs() < 1e-6);
    }

    #[test]
    fn rmse_is_a_distance(a in prop::collection::vec(-5.0f64..5.0, 1..40), shift in -1.0f64..1.0) {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let ab = rmse(&a, &b).unwrap();
        prop_assert_eq!(ab, rmse(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - shift.abs()).abs() < 1e-12);
    }

    #[test]
    fn bsm_monotone_in_strike_and_spot(k in 0.8f64..1.25, dk in 1e-3f64..0.1, s0 in 0.8f64..1.25, sigma in 0.1f64..0.5) {
        let base = BsmInputs { s0, k, sigma, r: 0.0, t: 0.5 };
        let p = digital_probability(&base).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!(digital_probability(&base.with_strike(k + dk)).unwrap() < p);
        let higher_spot = BsmInputs { s0: s0 + dk, ..base };
        prop_assert!(digital_probability(&higher_spot).unwrap() > p);
    }

    #[test]
    fn noiseless_paths_give_indicator(strike in 0.5f64..1.5, kappa in 0.0f64..1.0, b in 0.8f64..1.2) {
        let params = VasicekParams::new(kappa, b, 0.0, 1.0).unwrap();
        let grid = simulate(&params, 0.5, 5, 200, 1).unwrap();
        let terminal = grid.terminal()[0];
        prop_assume!((terminal - strike).abs() > 1e-9);
        let est = event_probability(&fit(&grid, &params, strike, &LearnerConfig::default()).unwrap());
        let expected = if terminal >= strike { 1.0 } else { 0.0 };
        prop_assert!((est.probability - expected).abs() < 1e-9);
    }
}

#[test]
fn fit_is_bit_reproducible() {
    let grid = reference_grid(3000, 8);
    let config = LearnerConfig {
        dropout_p: 0.7,
        seed: 5,
        ..Default::default()
    };
    let a = fit(&grid, &VasicekParams::reference(), 0.98, &config).unwrap();
    let b = fit(&grid, &VasicekParams::reference(), 0.98, &config).unwrap();
    assert_eq!(a.phi, b.phi);
    assert_eq!(a.w, b.w);
    assert_eq!(a.q_values, b.q_values);
    assert_eq!(a.actions, b.actions);
}

#[test]
fn probability_non_increasing_and_bounded_over_strikes() {
    let params = VasicekParams::reference();
    let grid = reference_grid(20_000, 2);
    let config = LearnerConfig::default();
    let states = to_state(&grid, &params);
    let increments = delta_s(&grid, config.r).unwrap();
    let bases = step_bases(&states.values, &config).unwrap();
    let strikes: Vec<f64> = (0..13).map(|i| 0.85 + 0.025 * i as f64).collect();
    let mut previous = f64::INFINITY;
    for strike in strikes {
        let est = event_probability(&fit_with_bases(&grid, &bases, &increments, strike, &config).unwrap());
        assert!(
            (-0.02..=1.02).contains(&est.raw_probability),
            "{strike}: {}",
            est.raw_probability
        );
        assert!((0.0..=1.0).contains(&est.probability));
        assert!(est.probability <= previous, "not monotone at {strike}");
        previous = est.probability;
    }
}

#[test]
fn small_lambdas_agree() {
    let params = VasicekParams::reference();
    let grid = reference_grid(40_000, 3);
    for strike in [0.92, 1.0, 1.02] {
        let p = |lambda| {
            let config = LearnerConfig {
                lambda,
                ..Default::default()
            };
            event_probability(&fit(&grid, &params, strike, &config).unwrap()).probability
        };
        assert!((p(1e-4) - p(1e-3)).abs() < 0.005, "strike {strike}");
    }
}

#[test]
fn learner_tracks_empirical_frequency() {
    let params = VasicekParams::reference();
    let grid = reference_grid(20_000, 17);
    for strike in [0.92, 0.98, 1.0, 1.02] {
        let est = event_probability(&fit(&grid, &params, strike, &LearnerConfig::default()).unwrap());
        let terminal = grid.terminal();
        let freq = terminal.iter().filter(|s| **s >= strike).count() as f64 / terminal.len() as f64;
        assert!(
            (est.probability - freq).abs() <= 0.015,
            "strike {strike}: {} vs {freq}",
            est.probability
        );
    }
}

#[test]
fn comparison_csv_is_byte_stable() {
    let file = ExperimentFile::parse(
        "[grid]\npaths = 4000\nseed = 9\n[strikes]\nvalues = [0.95, 1.0, 1.05]\n",
        "inline",
    )
    .unwrap();
    let config = &file.datasets().unwrap()[0];
    let first = comparison_csv(&run_comparison(config).unwrap());
    let second = comparison_csv(&run_comparison(config).unwrap());
    assert_eq!(first, second);
    assert_eq!(first.lines().count(), 4);
}
