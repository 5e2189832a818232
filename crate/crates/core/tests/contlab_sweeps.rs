mod common;

use common::{bigfix, rel_err};
use fraccont::contlab::*;
use fraccont::fracgrid::{GridFn, TimeGrid};
use proptest::prelude::*;
use std::sync::Arc;

fn unit_sweep() -> SweepConfig {
    SweepConfig::spectral_unit(1.0, 0.0, 1.0, 0.5, 0.1, 6).unwrap()
}

fn csv_of(r: &ContinuityReport) -> Vec<u8> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn spectral_unit_mode_is_lipschitz() {
    let r = sweep_orders(&unit_sweep()).unwrap();
    assert_eq!(r.rows.len(), 7);
    assert!((r.slope - 1.0).abs() <= 0.1, "slope {}", r.slope);
    assert_eq!(r.predicted, 1.0);
    assert!(r.verdict);
    assert!(r.envelope.is_none());
}

#[test]
fn spectral_unit_mode_matches_the_closed_form_difference() {
    // the discrepancy is sup_t |E_{α+h,1}(-t^{α+h}) - E_{α,1}(-t^α)| over the nodes
    let r = sweep_orders(&unit_sweep()).unwrap();
    let (h, d) = r.rows[2];
    let exact = (0..=64)
        .map(|n| {
            let t = n as f64 / 64.0;
            if n == 0 {
                return 0.0;
            }
            (bigfix::mittag_leffler(0.5 + h, 1.0, -t.powf(0.5 + h)) - bigfix::mittag_leffler(0.5, 1.0, -t.sqrt())).abs()
        })
        .fold(0.0, f64::max);
    assert!(rel_err(d, exact) < 1e-9, "{d} vs {exact}");
}

#[test]
fn rough_data_exponent_is_at_least_predicted() {
    let r = sweep_orders(&SweepConfig::spectral_power(0.5, 0.0, 1.0, 0.5, 0.1, 6, 64).unwrap()).unwrap();
    assert!((r.predicted - 0.5).abs() < 1e-15);
    assert!(r.slope >= 0.4);
    assert!(r.verdict);
}

#[test]
fn linear_abel_target() {
    let r = sweep_orders(&SweepConfig::abel_linear(-1.0, 1.0, 0.5, 0.1, 6, 256).unwrap()).unwrap();
    assert!(r.slope >= 0.9, "slope {}", r.slope);
    assert!(r.verdict);
    let env = r.envelope.unwrap();
    assert!(env.is_finite() && env >= 1.0);
}

#[test]
fn sequential_target() {
    let r = sweep_orders(&SweepConfig::seqfde_relaxation(1.0, 1.0, 0.5, 0.1, 5, 128).unwrap()).unwrap();
    assert!(r.slope >= 0.9, "slope {}", r.slope);
    assert!(r.verdict);
}

#[test]
fn slope_survives_dropping_the_coarsest_row() {
    for cfg in [
        unit_sweep(),
        SweepConfig::spectral_power(0.5, 0.0, 1.0, 0.5, 0.1, 6, 64).unwrap(),
        SweepConfig::abel_linear(-1.0, 1.0, 0.5, 0.1, 6, 256).unwrap(),
    ] {
        let r = sweep_orders(&cfg).unwrap();
        let (s, _) = fit_loglog(&r.rows[1..]).unwrap();
        assert!((s - r.slope).abs() < 0.05, "{} vs {}", s, r.slope);
    }
}

#[test]
fn sweeps_are_deterministic() {
    let a = csv_of(&sweep_orders(&unit_sweep()).unwrap());
    let b = csv_of(&sweep_orders(&unit_sweep()).unwrap());
    assert_eq!(a, b);
    let back = ContinuityReport::read_csv(&a[..]).unwrap();
    assert_eq!(csv_of(&back), a);
}

#[test]
fn sweep_errors() {
    let mut cfg = unit_sweep();
    cfg.band = (0.5, 0.55);
    assert!(matches!(sweep_orders(&cfg), Err(ContError::InvalidConfig(_))));
    let cfg = SweepConfig::abel_linear(-1e9, 1.0, 0.5, 0.1, 3, 4).unwrap();
    match sweep_orders(&cfg) {
        Err(ContError::SolverFailure { h, .. }) => assert_eq!(h, 0.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn point_sampler_gives_zero_mean() {
    let mc = monte_carlo_orders(
        &RandomOrderConfig { sampler: Sampler::Point(0.5), trials: 16, lambda_moment: 1.0, seed: 1 },
        &unit_sweep(),
    )
    .unwrap();
    assert_eq!(mc.mean, 0.0);
    assert_eq!(mc.moment, 0.0);
    assert!(mc.verdict);
}

#[test]
fn two_point_sampler_averages_the_deterministic_values() {
    let h = 0.05;
    let sweep = unit_sweep();
    let mc = monte_carlo_orders(
        &RandomOrderConfig { sampler: Sampler::TwoPoint { lo: 0.5 - h, hi: 0.5 + h }, trials: 32, lambda_moment: 1.0, seed: 3 },
        &sweep,
    )
    .unwrap();
    assert!((mc.moment - h).abs() < 1e-15);
    let base = solve_target(&sweep.target, 0.5, sweep.band).unwrap();
    let d = |a: f64| discrepancy(&sweep.target, sweep.norm, &solve_target(&sweep.target, a, sweep.band).unwrap(), &base).unwrap();
    let (lo, hi) = (d(0.5 - h), d(0.5 + h));
    for (_, a, v) in &mc.samples {
        let expect = if *a < 0.5 { lo } else { hi };
        assert_eq!(*v, expect);
    }
    assert!(mc.mean >= lo.min(hi) && mc.mean <= lo.max(hi));
    // h lies on the dyadic sweep, so the upper value is a report row
    assert_eq!(mc.sweep.rows[1], (h, hi));
}

#[test]
fn uniform_sampler_second_moment() {
    let h = 0.05;
    let mc = monte_carlo_orders(
        &RandomOrderConfig { sampler: Sampler::Uniform { lo: 0.5 - h, hi: 0.5 + h }, trials: 64, lambda_moment: 2.0, seed: 2024 },
        &unit_sweep(),
    )
    .unwrap();
    // E|a-α|² = h²/3; 64 draws keep the sample estimate within 20%
    assert!(rel_err(mc.moment, h / 3f64.sqrt()) < 0.2, "{}", mc.moment);
    assert!(mc.verdict, "{} > {}", mc.mean, mc.bound());
    assert!(mc.samples.iter().all(|s| (0.45..=0.55).contains(&s.1)));
}

#[test]
fn monte_carlo_errors() {
    let sweep = unit_sweep();
    let cfg = RandomOrderConfig { sampler: Sampler::Uniform { lo: 0.45, hi: 0.55 }, trials: 8, lambda_moment: 2.0, seed: 0 };
    assert!(matches!(monte_carlo_orders(&cfg, &sweep), Err(ContError::TooFewTrials(8))));
    let cfg = RandomOrderConfig { sampler: Sampler::Uniform { lo: 0.3, hi: 0.55 }, trials: 16, ..cfg };
    assert!(matches!(monte_carlo_orders(&cfg, &sweep), Err(ContError::SamplerOutOfBand { .. })));
    let cfg = RandomOrderConfig { sampler: Sampler::Point(0.5), lambda_moment: 0.5, ..cfg };
    assert!(matches!(monte_carlo_orders(&cfg, &sweep), Err(ContError::InvalidConfig(_))));
}

#[test]
fn monte_carlo_is_deterministic() {
    let cfg = RandomOrderConfig { sampler: Sampler::Uniform { lo: 0.45, hi: 0.55 }, trials: 16, lambda_moment: 2.0, seed: 9 };
    let run = || {
        let mut buf = Vec::new();
        monte_carlo_orders(&cfg, &unit_sweep()).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(run(), run());
    let other = RandomOrderConfig { seed: 10, ..cfg.clone() };
    let mut buf = Vec::new();
    monte_carlo_orders(&other, &unit_sweep()).unwrap().write_csv(&mut buf).unwrap();
    assert_ne!(buf, run());
}

fn ones(n: usize) -> GridFn {
    GridFn::constant(&Arc::new(TimeGrid::uniform(1.0, n).unwrap()), 1.0)
}

#[test]
fn convolution_with_equal_parameters_vanishes() {
    assert_eq!(convolution_continuity(&ones(32), 0.5, 0.5, -1.0, -1.0).unwrap(), (0.0, 0.0));
}

#[test]
fn convolution_of_ones_matches_the_relaxation_profiles() {
    // ∫_0^t x^{α-1} E_{α,α}(-x^α) dx = 1 - E_{α,1}(-t^α)
    let n = 128;
    let (lhs, ratio) = convolution_continuity(&ones(n), 0.5, 0.6, -1.0, -1.0).unwrap();
    let sq: Vec<f64> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let d = bigfix::mittag_leffler(0.5, 1.0, -t.sqrt()) - bigfix::mittag_leffler(0.6, 1.0, -t.powf(0.6));
            d * d
        })
        .collect();
    let exact = (sq.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / n as f64).sqrt();
    assert!(rel_err(lhs, exact) < 1e-8, "{lhs} vs {exact}");
    assert!(rel_err(ratio, lhs / (0.1 * 2.0)) < 1e-14);
}

#[test]
fn convolution_ratio_is_bounded_over_dyadic_orders() {
    let f = ones(256);
    let ratios: Vec<f64> =
        (0..7).map(|m| convolution_continuity(&f, 0.5, 0.5 + 0.1 * 0.5f64.powi(m), -1.0, -1.0).unwrap().1).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(lo > 0.0 && hi / lo <= 3.0, "{ratios:?}");
    // λ perturbations too
    let (_, r) = convolution_continuity(&f, 0.5, 0.5, -1.0, -1.2).unwrap();
    assert!(r > 0.0 && r < 1.0);
}

#[test]
fn convolution_errors() {
    let f = ones(8);
    assert!(matches!(convolution_continuity(&f, 1.0, 0.5, -1.0, -1.0), Err(ContError::AlphaOutOfRange(_))));
    assert!(matches!(convolution_continuity(&f, 0.5, 0.5, 0.0, -1.0), Err(ContError::LambdaNotNegative(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_is_nondecreasing_in_the_index(
        samples in proptest::collection::vec(0.3f64..0.7, 1..40),
        nu in 0.1f64..1.0,
        l1 in 0.0f64..3.0,
        dl in 0.0f64..3.0,
    ) {
        let (a, b) = (nu + l1, nu + l1 + dl);
        let (ma, mb) = (sample_moment(&samples, 0.5, a, nu), sample_moment(&samples, 0.5, b, nu));
        prop_assert!(ma <= mb * (1.0 + 1e-12) + 1e-300, "{} > {}", ma, mb);
    }

    #[test]
    fn fit_recovers_power_laws(c in 0.01f64..100.0, p in 0.1f64..2.0, levels in 2usize..8) {
        let rows: Vec<(f64, f64)> = (0..=levels).map(|m| { let h = 0.1 * 0.5f64.powi(m as i32); (h, c * h.powf(p)) }).collect();
        let r = ContinuityReport::from_rows(rows, p, None).unwrap();
        prop_assert!((r.slope - p).abs() < 1e-10);
        prop_assert!(rel_err(r.fitted_constant, c) < 1e-9);
        prop_assert!(r.verdict);
    }

    #[test]
    fn report_csv_round_trip(ds in proptest::collection::vec(0.0f64..1.0, 2..8), pred in 0.1f64..1.0) {
        let mut ds = ds;
        ds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ds[0] += 1e-3;
        ds[1] += 1e-6;
        let rows: Vec<(f64, f64)> = ds.iter().enumerate().map(|(m, d)| (0.1 * 0.5f64.powi(m as i32), *d)).collect();
        let r = ContinuityReport::from_rows(rows, pred, None).unwrap();
        let back = ContinuityReport::read_csv(&csv_of(&r)[..]).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn monte_carlo_same_seed_same_report(seed in any::<u64>()) {
        let cfg = RandomOrderConfig { sampler: Sampler::Uniform { lo: 0.45, hi: 0.55 }, trials: 16, lambda_moment: 2.0, seed };
        let a = monte_carlo_orders(&cfg, &unit_sweep()).unwrap();
        let b = monte_carlo_orders(&cfg, &unit_sweep()).unwrap();
        prop_assert_eq!(a, b);
    }
}
