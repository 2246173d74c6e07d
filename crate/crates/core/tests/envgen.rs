use proptest::prelude::*;
use randfront::envgen::*;

fn specs(seed: u64) -> Vec<PotentialSpec> {
    vec![
        PotentialSpec::constant(1.0),
        PotentialSpec::matern_bump(0.5, 2.0, 0.5, seed),
        PotentialSpec::matern_bump(1.5, 1.0, 0.3, seed),
        PotentialSpec::smoothed_block(0.5, 3.0, 2.0, 2.0, seed),
        PotentialSpec::smoothed_block(0.2, 1.0, 3.0, 1.0, seed),
    ]
}

/// Simultaneous deletion by direct pairwise comparison.
fn brute_thin(raw: &[f64]) -> Vec<f64> {
    raw.iter()
        .enumerate()
        .filter(|(i, p)| raw.iter().enumerate().all(|(j, q)| *i == j || (*p - q).abs() > 1.0))
        .map(|(_, p)| *p)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_within_bounds(seed in any::<u64>(), x in -1e4f64..1e4) {
        for s in specs(seed) {
            let f = PotentialField::new(s.clone()).unwrap();
            let v = f.evaluate(x);
            prop_assert!(v >= s.ei && v <= s.es, "{v} outside [{}, {}]", s.ei, s.es);
            let z = f.evaluate_zeta(x);
            prop_assert_eq!(z, v - s.es);
            prop_assert!(z <= 0.0 && z >= -(s.es - s.ei));
        }
    }

    #[test]
    fn shift_is_translation(seed in any::<u64>(), h in -50.0f64..50.0, g in -50.0f64..50.0, x in -20.0f64..20.0) {
        for s in specs(seed) {
            let f = PotentialField::new(s).unwrap();
            prop_assert_eq!(f.shift(h).evaluate(x).to_bits(), f.evaluate(x + h).to_bits());
            let a = f.shift(h).shift(g).evaluate(x);
            let b = f.shift(h + g).evaluate(x);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluation_order_irrelevant(seed in any::<u64>(), xs in prop::collection::vec(-500.0f64..500.0, 1..40)) {
        for s in specs(seed) {
            let warm = PotentialField::new(s.clone()).unwrap();
            let forward: Vec<u64> = xs.iter().map(|&x| warm.evaluate(x).to_bits()).collect();
            let cold = PotentialField::new(s).unwrap();
            let backward: Vec<u64> = xs.iter().rev().map(|&x| cold.evaluate(x).to_bits()).collect();
            prop_assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
        }
    }

    #[test]
    fn sample_grid_is_pointwise(seed in any::<u64>(), x0 in -100.0f64..100.0, dx in 0.001f64..0.7, n in 1usize..300) {
        for s in specs(seed) {
            let f = PotentialField::new(s).unwrap();
            let g = f.sample_grid(x0, dx, n);
            prop_assert_eq!(g.len(), n);
            for (i, v) in g.iter().enumerate() {
                prop_assert_eq!(v.to_bits(), f.evaluate(x0 + i as f64 * dx).to_bits());
            }
        }
    }

    #[test]
    fn thinning_matches_brute_force(seed in any::<u64>(), lo in -200.0f64..200.0) {
        let s = PotentialSpec::matern_bump(0.5, 2.0, 0.5, seed);
        let raw = raw_points(&s, lo - 5.0, lo + 45.0);
        let kept: Vec<f64> = brute_thin(&raw).into_iter().filter(|&p| p >= lo && p <= lo + 40.0).collect();
        prop_assert_eq!(matern_points(&s, lo, lo + 40.0).unwrap(), kept.clone());
        prop_assert!(kept.windows(2).all(|w| w[1] - w[0] > 1.0));
    }

    #[test]
    fn lipschitz_bound_holds(seed in any::<u64>(), x0 in -100.0f64..100.0) {
        for s in specs(seed) {
            let f = PotentialField::new(s).unwrap();
            let dx = 1e-3;
            let g = f.sample_grid(x0, dx, 5001);
            let worst = g.windows(2).map(|w| (w[1] - w[0]).abs() / dx).fold(0.0, f64::max);
            prop_assert!(worst <= f.lipschitz_bound() * (1.0 + 1e-9) + 1e-12, "{worst} > {}", f.lipschitz_bound());
        }
    }

    #[test]
    fn far_points_use_disjoint_cells(seed in any::<u64>(), x in -1e3f64..1e3, gap in 0.0f64..10.0) {
        for s in specs(seed).into_iter().skip(1) {
            let f = PotentialField::new(s.clone()).unwrap();
            let y = x + 2.0 * s.dependence_range() + 1e-6 + gap;
            let a = f.dependency_cells(x);
            let b = f.dependency_cells(y);
            prop_assert!(a.iter().all(|k| !b.contains(k)), "{:?} vs {:?}", a, b);
        }
    }
}

#[test]
fn thinning_examples() {
    assert_eq!(matern_thin(&[0.0, 0.4, 3.0]), vec![3.0]);
    assert_eq!(matern_thin(&[0.0, 2.0, 4.0]), vec![0.0, 2.0, 4.0]);
}

#[test]
fn mollifier_examples() {
    for eps in [0.1, 0.5, 0.9] {
        assert_eq!(mollifier_value(0.0, eps), 1.0);
        assert_eq!(mollifier_value(0.6 * eps, eps), 0.0);
    }
    assert_eq!(mollifier_value(-0.1, 1.0), mollifier_value(0.1, 1.0));
}

#[test]
fn matern_off_bump_and_on_peak() {
    let s = PotentialSpec::matern_bump(0.5, 2.0, 0.5, 99);
    let f = PotentialField::new(s.clone()).unwrap();
    let pts = matern_points(&s, 0.0, 200.0).unwrap();
    assert!(!pts.is_empty());
    for &p in &pts {
        assert_eq!(f.evaluate(p), s.es);
    }
    let mut checked = 0;
    for k in 0..2000 {
        let x = k as f64 * 0.1;
        if pts.iter().all(|p| (p - x).abs() > 0.26) && x > 2.0 && x < 198.0 {
            assert_eq!(f.evaluate(x), 0.5);
            assert_eq!(f.evaluate_zeta(x), -2.0);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn stationary_moments() {
    for s in specs(0).into_iter().skip(1) {
        let n = 500;
        let at = |x: f64| -> Vec<f64> {
            (0..n)
                .map(|k| PotentialField::new(s.with_seed(1000 + k)).unwrap().evaluate(x))
                .collect()
        };
        let a = at(0.0);
        let b = at(17.3);
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let mu = m(v);
            v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let se = ((var(&a) + var(&b)) / n as f64).sqrt();
        assert!((m(&a) - m(&b)).abs() <= 4.0 * se, "{:?}: means {} {}", s.kind, m(&a), m(&b));
        let va = var(&a);
        let vb = var(&b);
        let fourth = |v: &[f64]| {
            let mu = m(v);
            v.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / v.len() as f64
        };
        let se_v = ((fourth(&a) - va * va + fourth(&b) - vb * vb) / n as f64).sqrt();
        assert!((va - vb).abs() <= 4.0 * se_v, "{:?}: variances {va} {vb}", s.kind);
    }
}

#[test]
fn concurrent_evaluation_is_consistent() {
    use rayon::prelude::*;
    let s = PotentialSpec::matern_bump(0.5, 2.0, 0.5, 5);
    let shared = PotentialField::new(s.clone()).unwrap();
    let xs: Vec<f64> = (0..20_000).map(|k| (k as f64 * 7.31).sin() * 3000.0).collect();
    let par: Vec<u64> = xs.par_iter().map(|&x| shared.evaluate(x).to_bits()).collect();
    let fresh = PotentialField::new(s).unwrap();
    let seq: Vec<u64> = xs.iter().map(|&x| fresh.evaluate(x).to_bits()).collect();
    assert_eq!(par, seq);
}

#[test]
fn boundedness_dense() {
    for s in specs(3) {
        let f = PotentialField::new(s.clone()).unwrap();
        let g = f.sample_grid(-5e4, 0.1, 1_000_000);
        assert!(g.iter().all(|v| *v >= s.ei && *v <= s.es));
    }
}
