use cvarvi::cvar::optimizer_bounds;
use cvarvi::{cvar_discrete, empirical_cvar, empirical_cvar_lp, DiscreteDistribution, RiskLevel, SampleBatch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum of `t + sum (v - t)_+ / (N alpha)` over every sample value. The
/// objective is piecewise linear with kinks at the samples, so its minimum is
/// attained at one of them.
fn grid_min(values: &[f64], alpha: f64) -> f64 {
    let n = values.len() as f64;
    values
        .iter()
        .map(|&t| t + values.iter().map(|&v| (v - t).max(0.0)).sum::<f64>() / (n * alpha))
        .fold(f64::INFINITY, f64::min)
}

fn batch(values: Vec<f64>) -> SampleBatch {
    SampleBatch::from_values(values).unwrap()
}

fn values_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 1..120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn order_statistic_minimizes_the_program(values in values_strategy(), alpha in 0.01..0.99f64) {
        let a = RiskLevel::new(alpha).unwrap();
        let est = empirical_cvar(&batch(values.clone()), a).unwrap();
        let oracle = grid_min(&values, alpha);
        prop_assert!((est.value - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
    }

    #[test]
    fn lp_form_agrees(values in values_strategy(), alpha in 0.01..0.99f64) {
        let a = RiskLevel::new(alpha).unwrap();
        let b = batch(values);
        let x = empirical_cvar(&b, a).unwrap().value;
        let y = empirical_cvar_lp(&b, a).unwrap().value;
        prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
    }

    #[test]
    fn translation_and_scaling(values in values_strategy(), alpha in 0.01..0.99f64,
                               shift in -50.0..50.0f64, scale in 0.1..10.0f64) {
        let a = RiskLevel::new(alpha).unwrap();
        let base = empirical_cvar(&batch(values.clone()), a).unwrap().value;
        let moved: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let got = empirical_cvar(&batch(moved), a).unwrap().value;
        prop_assert!((got - (scale * base + shift)).abs() <= 1e-9 * (1.0 + got.abs()));
    }

    #[test]
    fn decreasing_in_alpha(values in values_strategy(), a1 in 0.01..0.99f64, a2 in 0.01..0.99f64) {
        let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        let b = batch(values);
        let c_lo = empirical_cvar(&b, RiskLevel::new(lo).unwrap()).unwrap().value;
        let c_hi = empirical_cvar(&b, RiskLevel::new(hi).unwrap()).unwrap().value;
        prop_assert!(c_lo >= c_hi - 1e-9 * (1.0 + c_hi.abs()));
    }

    #[test]
    fn bounded_by_max_and_mean(values in values_strategy(), alpha in 0.01..0.99f64) {
        let a = RiskLevel::new(alpha).unwrap();
        let c = empirical_cvar(&batch(values.clone()), a).unwrap().value;
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!(c <= max + 1e-9 && c >= mean - 1e-9);
    }

    #[test]
    fn uniform_atoms_match_samples(values in values_strategy(), alpha in 0.01..0.99f64) {
        let a = RiskLevel::new(alpha).unwrap();
        let b = batch(values);
        let x = empirical_cvar(&b, a).unwrap();
        let y = cvar_discrete(&DiscreteDistribution::uniform_over(&b), a).unwrap();
        prop_assert!((x.value - y.value).abs() <= 1e-12 * (1.0 + x.value.abs()));
        prop_assert_eq!(x.t_star, y.t_star);
    }
}

#[test]
fn optimizer_lies_in_its_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let lo = -3.0;
        let hi = 5.0;
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let alpha = RiskLevel::new(rng.random_range(0.01..0.99)).unwrap();
        let est = empirical_cvar(&batch(values), alpha).unwrap();
        let (t_int, _) = optimizer_bounds(lo, hi, alpha).unwrap();
        assert!(est.t_star >= t_int[0] && est.t_star <= t_int[1]);
    }
}

#[test]
fn csv_round_trip_preserves_values() {
    let b = batch(vec![0.1, -2.5, 1e-300, 7.0]);
    let mut buf = Vec::new();
    b.write_csv(&mut buf).unwrap();
    assert!(buf.starts_with(b"value\n"));
    let back = SampleBatch::read_csv(buf.as_slice(), 0, "mem").unwrap();
    assert_eq!(back.values(), b.values());
}
