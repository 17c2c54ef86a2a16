use cvarvi::bounds::{
    covering_number_compact, exponential_bound, flow_cover_point, flow_resolutions, pointwise_deviation_bound,
    simplex_cover_point, simplex_lattice, simplex_lattice_size, BoundInputs, FormulaId, RoutingShape,
};
use cvarvi::vi::{FeasibleSet, SimplexBlock};
use cvarvi::{cvar_discrete, empirical_cvar, DiscreteDistribution, RiskLevel, SampleBatch};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn lattice_cover_is_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=4usize {
        for k in 1..=6u64 {
            let d = 2.5;
            let eps = (n as f64).sqrt() * d / k as f64;
            let cover = simplex_lattice(n, d, k);
            assert_eq!(BigUint::from(cover.len()), simplex_lattice_size(n, k));
            let set = FeasibleSet::simplex_product(vec![SimplexBlock { dim: n, demand: d }]).unwrap();
            for _ in 0..2000 {
                let x = set.sample_uniform(&mut rng).unwrap();
                let c = simplex_cover_point(&x, d, k);
                assert!(dist(&x, &c) <= eps * (1.0 + 1e-12));
                assert!(cover.iter().any(|p| dist(p, &c) < 1e-12), "assigned point is not in the lattice");
            }
        }
    }
}

#[test]
fn product_cover_is_valid() {
    let ods = [(3usize, 2.0), (2usize, 1.0)];
    let eps = 0.8;
    let ks = flow_resolutions(&ods, eps).unwrap();
    let set = FeasibleSet::simplex_product(vec![
        SimplexBlock { dim: 3, demand: 2.0 },
        SimplexBlock { dim: 2, demand: 1.0 },
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let h = set.sample_uniform(&mut rng).unwrap();
        let c = flow_cover_point(&h, &ods, eps).unwrap();
        assert!(dist(&h, &c) <= eps);
        assert!(set.violation(&c).unwrap() < 1e-12);
        // Every block sits on its own lattice.
        for (block, (&(_, d), &k)) in [&c[..3], &c[3..]].iter().zip(ods.iter().zip(&ks)) {
            for v in block.iter() {
                let steps = v * k as f64 / d;
                assert!((steps - steps.round()).abs() < 1e-9);
            }
        }
    }
}

fn inputs(formula: FormulaId) -> BoundInputs {
    BoundInputs {
        n: 3,
        alpha: RiskLevel::new(0.1).unwrap(),
        m_lip: 2.0,
        diam_x: 10.0,
        ell: 1.0,
        big_l: 4.0,
        epsilon: 0.5,
        delta_eps: Some(0.5),
        sigma: None,
        f_max: (formula == FormulaId::Separable).then_some(1.5),
        g_rge: (formula == FormulaId::Separable).then_some(2.0),
        routing: (formula == FormulaId::Routing).then(|| RoutingShape {
            paths_per_od: vec![2, 1],
            demands: vec![1.0, 2.0],
        }),
    }
}

#[test]
fn bounds_tighten_with_samples_and_loosen_with_accuracy() {
    for formula in [FormulaId::General, FormulaId::Separable, FormulaId::Routing] {
        let mut prev_gamma = 0.0;
        let mut prev_beta = f64::INFINITY;
        for delta in [2.0, 1.0, 0.5, 0.25, 0.1, 0.01] {
            let mut i = inputs(formula);
            i.delta_eps = Some(delta);
            let r = exponential_bound(&i, formula).unwrap();
            assert!(r.gamma.ln() >= prev_gamma - 1e-12, "{formula}: gamma shrank as delta fell");
            assert!(r.beta < prev_beta, "{formula}: beta grew as delta fell");
            prev_gamma = r.gamma.ln();
            prev_beta = r.beta;
            let mut last = -1.0;
            for n in [1usize, 10, 100, 1000, 10_000, 100_000, 1_000_000] {
                let p = r.success_probability(n);
                assert!(p >= last);
                last = p;
            }
        }
    }
    let a = RiskLevel::new(0.1).unwrap();
    let mut last = 2.0;
    for n in [1, 10, 100, 1000, 10_000, 100_000] {
        let b = pointwise_deviation_bound(0.0, 1.0, a, 0.3, n).unwrap();
        assert!(b <= last);
        last = b;
    }
    assert!(covering_number_compact(3, 1.0, 0.1).unwrap() > covering_number_compact(3, 1.0, 0.2).unwrap());
}

#[test]
fn empirical_deviation_respects_the_pointwise_bound() {
    // Atoms on [0, 1] with a known CVaR.
    let dist = DiscreteDistribution::new(vec![(0.0, 0.5), (0.3, 0.2), (0.8, 0.2), (1.0, 0.1)]).unwrap();
    let cdf: Vec<(f64, f64)> = {
        let mut acc = 0.0;
        dist.atoms()
            .iter()
            .map(|&(v, p)| {
                acc += p;
                (v, acc)
            })
            .collect()
    };
    let alpha = RiskLevel::new(0.2).unwrap();
    let exact = cvar_discrete(&dist, alpha).unwrap().value;
    let reps = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [50usize, 200] {
        let mut misses = [0usize; 2];
        let eps = [0.1, 0.2];
        for _ in 0..reps {
            let draws: Vec<f64> = (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    cdf.iter().find(|&&(_, c)| u < c).map_or(1.0, |&(v, _)| v)
                })
                .collect();
            let est = empirical_cvar(&SampleBatch::from_values(draws).unwrap(), alpha).unwrap().value;
            for (m, e) in misses.iter_mut().zip(eps) {
                if (est - exact).abs() >= e {
                    *m += 1;
                }
            }
        }
        for (m, e) in misses.iter().zip(eps) {
            let freq = *m as f64 / reps as f64;
            let bound = pointwise_deviation_bound(0.0, 1.0, alpha, e, n).unwrap();
            let se = (bound * (1.0 - bound) / reps as f64).sqrt();
            assert!(freq <= bound + 3.0 * se, "N={n} eps={e}: {freq} > {bound}");
        }
    }
}
