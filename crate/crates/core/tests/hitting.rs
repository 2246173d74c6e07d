use randfront::envgen::{PotentialField, PotentialSpec};
use randfront::hitting::*;

fn flat(c: f64) -> PotentialField {
    // ξ ≡ 1 with es = 1 − c, so ζ ≡ c.
    PotentialField::new(PotentialSpec::constant_below(1.0, 1.0 - c)).unwrap()
}

#[test]
fn constant_zeta_matches_laplace_transform() {
    let cfg = BvpConfig::default();
    for &c in &[0.0, -0.5, -2.0] {
        let f = flat(c);
        for k in 0..=20 {
            let eta = -0.05 - (5.0 - 0.05) * k as f64 / 20.0;
            let got = log_mgf_unit(&f, 1, eta, &cfg).unwrap();
            let want = -(2.0 * (-c - eta)).sqrt();
            assert!(((got - want) / want).abs() < 1e-6, "c={c} eta={eta}: {got} vs {want}");
        }
    }
}

#[test]
fn partial_crossing_limits() {
    let cfg = BvpConfig::default();
    let f = PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, 4)).unwrap();
    let unit = log_mgf_unit(&f, 3, -0.7, &cfg).unwrap();
    let near_left = log_mgf_partial(&f, 2.0 + 1e-4, -0.7, &cfg).unwrap();
    let near_right = log_mgf_partial(&f, 3.0 - 1e-4, -0.7, &cfg).unwrap();
    let mid = log_mgf_partial(&f, 2.5, -0.7, &cfg).unwrap();
    assert!(near_left < 0.0 && near_left > -1e-3);
    assert!((near_right - unit).abs() < 1e-3);
    assert!(mid > unit && mid < 0.0);
}

#[test]
fn averaged_mgf_is_additive() {
    let cfg = BvpConfig::default();
    let f = PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, 9)).unwrap();
    for &x in &[6.0, 6.4] {
        let avg = log_mgf_avg(&f, x, -0.8, &cfg).unwrap();
        let mut sum: f64 = (1..=6).map(|i| log_mgf_unit(&f, i, -0.8, &cfg).unwrap()).sum();
        if x != 6.0 {
            sum += log_mgf_partial(&f, x, -0.8, &cfg).unwrap();
        }
        assert!((x * avg - sum).abs() < 1e-10, "{} vs {}", x * avg, sum);
    }
    let one = log_mgf_avg(&f, 1.0, -0.8, &cfg).unwrap();
    assert!((one - log_mgf_unit(&f, 1, -0.8, &cfg).unwrap()).abs() < 1e-12);
}

#[test]
fn truncation_insensitive() {
    let cfg = BvpConfig::default();
    let wide = BvpConfig {
        right_margin: 60.0,
        ..cfg
    };
    let f = PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, 2)).unwrap();
    for &eta in &[-0.05, -0.5, -3.0] {
        for i in [1, 5, 17] {
            let a = log_mgf_unit(&f, i, eta, &cfg).unwrap();
            let b = log_mgf_unit(&f, i, eta, &wide).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn convexity_on_random_fields() {
    let cfg = BvpConfig::default();
    for seed in 0..5 {
        let f = PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, seed)).unwrap();
        let chain = UnitChain::new(&f, 1, 3, &cfg);
        let mut prev = 0.0;
        for k in 0..30 {
            let eta = -5.0 + (5.0 - 0.05) * k as f64 / 29.0;
            let v = chain.logs_with_derivs(eta, cfg.eta_fd_step).unwrap();
            for u in &v {
                assert!(u[0] < 0.0 && u[1] > 0.0 && u[2] > 0.0);
            }
            assert!(v[0][1] > prev);
            prev = v[0][1];
        }
    }
}

#[test]
fn uniform_bands_across_fields() {
    // L_1 and its derivatives at fixed η are squeezed between the constant extremes.
    let cfg = BvpConfig::default();
    let eta = -0.6;
    let hi = -(2.0f64 * 0.6).sqrt();
    let lo = -(2.0f64 * (2.0 + 0.6)).sqrt();
    for seed in 0..100 {
        let f = PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, seed)).unwrap();
        let u = unit_log_mgf(&f, 1, eta, &cfg).unwrap();
        assert!(u.value <= hi + 1e-7 && u.value >= lo - 1e-7, "{u:?}");
        assert!(u.d1 > 0.0 && u.d1 < 10.0 && u.d2 > 0.0 && u.d2 < 50.0, "{u:?}");
    }
}

#[test]
fn functional_is_monotone_and_bounded() {
    let f = PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, 1)).unwrap();
    let cfg = FunctionalConfig::default();
    let xs = [3.0, 3.0, 3.0, 3.0];
    let ts = [2.0, 3.0, 5.0, 8.0];
    let r = hitting_functional_points(&f, &xs, &ts, RayWeight { kappa: 1.0, mu: -0.5 }, &cfg).unwrap();
    for w in r.windows(2) {
        assert!(w[1].ln_g >= w[0].ln_g);
    }
    for h in &r {
        assert!(h.ln_g <= 1e-9 && h.ln_g_lag <= h.ln_g);
    }
    let bad = hitting_functional_points(&f, &[3.0], &[0.5], RayWeight { kappa: 0.0, mu: 0.0 }, &cfg);
    assert!(bad.is_err());
}

#[test]
fn weight_does_not_change_answer() {
    let f = flat(0.0);
    let cfg = FunctionalConfig::default();
    let a = hitting_functional_points(&f, &[6.0], &[9.0], RayWeight { kappa: 0.0, mu: 0.0 }, &cfg).unwrap()[0];
    let b = hitting_functional_points(&f, &[6.0], &[9.0], RayWeight { kappa: 0.667, mu: -0.222 }, &cfg).unwrap()[0];
    let exact = (2.0 * statrs::function::erf::erfc(2.0 / 2f64.sqrt()) / 2.0).ln();
    assert!((a.ln_g - exact).abs() < 5e-3, "{} {}", a.ln_g, exact);
    assert!((b.ln_g - exact).abs() < 5e-3, "{} {}", b.ln_g, exact);
}
