use proptest::prelude::*;
use randfront::bbmre::{bridge_survival, count_leq, replicas, simulate, OffspringLaw};
use randfront::envgen::{PotentialField, PotentialSpec};
use randfront::error::Error;
use randfront::stats::{ks_gaussian, mean_se};

fn flat() -> PotentialField {
    PotentialField::new(PotentialSpec::constant(1.0)).unwrap()
}

fn matern(seed: u64) -> PotentialField {
    PotentialField::new(PotentialSpec::matern_bump(1.5, 1.0, 0.5, seed)).unwrap()
}

#[test]
fn single_child_law_is_brownian_motion() {
    let law = OffspringLaw::single();
    let xs: Vec<f64> = (0..4000)
        .map(|s| {
            let ps = simulate(&matern(1), &law, 0.7, 2.0, 10, s).unwrap();
            assert_eq!(ps.population(), 1);
            ps.positions[0]
        })
        .collect();
    let ks = ks_gaussian(&xs, 0.7, 2.0);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn yule_mean_population() {
    let pops: Vec<f64> = (0..10_000)
        .map(|s| simulate(&flat(), &OffspringLaw::binary(), 0.0, 1.0, 100_000, s).unwrap().population() as f64)
        .collect();
    let est = mean_se(&pops);
    assert!(est.z_against(std::f64::consts::E) <= 3.0, "{est:?}");
}

#[test]
fn cap_hit_is_reported() {
    let ps = simulate(&flat(), &OffspringLaw::binary(), 0.0, 10.0, 50, 1).unwrap();
    assert!(ps.cap_hit);
    assert!(matches!(count_leq(&ps, 0.0), Err(Error::CapHit)));
}

#[test]
fn invalid_arguments() {
    assert!(simulate(&flat(), &OffspringLaw::binary(), 0.0, 0.0, 10, 1).is_err());
    assert!(simulate(&flat(), &OffspringLaw::binary(), 0.0, 1.0, 0, 1).is_err());
    let bad = OffspringLaw { p: vec![0.5, 0.6] };
    assert!(simulate(&flat(), &bad, 0.0, 1.0, 10, 1).is_err());
}

#[test]
fn replicas_are_seeded() {
    let f = matern(2);
    let a = replicas(&f, &OffspringLaw::binary(), 1.0, 1.5, 0.0, 200, 100_000, 9).unwrap();
    let b = replicas(&f, &OffspringLaw::binary(), 1.0, 1.5, 0.0, 200, 100_000, 9).unwrap();
    let c = replicas(&f, &OffspringLaw::binary(), 1.0, 1.5, 0.0, 200, 100_000, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_are_monotone_in_level(seed in 0u64..1000, x in -2.0f64..2.0, t in 0.2f64..1.5) {
        let ps = simulate(&matern(seed), &OffspringLaw::binary(), x, t, 100_000, seed).unwrap();
        prop_assert_eq!(ps.positions.len(), ps.lineage.len());
        let mut prev = 0;
        for y in [-3.0, -1.0, 0.0, 1.0, 3.0, f64::INFINITY] {
            let c = count_leq(&ps, y).unwrap();
            prop_assert!(c >= prev);
            prev = c;
        }
        prop_assert_eq!(prev, ps.population());
    }

    #[test]
    fn mean_count_dominates_survival(seed in 0u64..1000, x in -1.0f64..2.0) {
        let rows = replicas(&matern(seed), &OffspringLaw::binary(), x, 1.0, 0.0, 100, 100_000, seed).unwrap();
        let hit = rows.iter().filter(|r| r.count_leq >= 1).count() as f64;
        let total: f64 = rows.iter().map(|r| r.count_leq as f64).sum();
        prop_assert!(total >= hit);
        prop_assert!(rows.iter().all(|r| r.count_leq <= r.population));
    }

    #[test]
    fn bridge_survival_is_a_probability(a in -1.0f64..1.0, b in -1.0f64..1.0, dt in 1e-3f64..2.0, w in 0.0f64..2.0) {
        let p = bridge_survival(a, b, dt, -1.0, 1.0);
        let q = bridge_survival(a, b, dt, -1.0 - w, 1.0 + w);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q >= p - 1e-12);
    }
}
