use randfront::envgen::PotentialSpec;
use randfront::lyapunov::{LyapunovProfile, ProfileConfig};

fn light() -> ProfileConfig {
    ProfileConfig {
        n_eta: 200,
        n_env: 4,
        n_units: 400,
        ..ProfileConfig::default()
    }
}

#[test]
fn flat_field_with_loose_upper_bound() {
    // ξ ≡ 1 with es = 1.5, so ζ ≡ −1/2 and L(η) = −√(1 − 2η)
    let p = LyapunovProfile::build(&PotentialSpec::constant_below(1.0, 1.5), &light()).unwrap();
    for (&eta, &l) in p.eta_grid.iter().zip(&p.l_table) {
        let exact = -(1.0 - 2.0 * eta).sqrt();
        assert!((l - exact).abs() <= 1e-6 * exact.abs(), "L({eta}) = {l}, want {exact}");
    }
    assert!((p.vc - 1.0).abs() < 1e-2, "v_c = {}", p.vc);
    assert!((p.v0 - 2f64.sqrt()).abs() < 1e-3, "v0 = {}", p.v0);
    for v in [1.2, 1.5, 2.0] {
        let eb = p.eta_bar(v).unwrap();
        assert!((eb - (0.5 - v * v / 2.0)).abs() < 1e-4, "eta_bar({v}) = {eb}");
        let lam = p.lyapunov_exponent(v);
        assert!((lam - (1.0 - v * v / 2.0)).abs() < 1e-4, "Lambda({v}) = {lam}");
    }
    assert!(p.eta_bar(0.9).is_err());
}

#[test]
fn random_field_profile_shape() {
    let spec = PotentialSpec::matern_bump(1.5, 1.0, 0.5, 3);
    let p = LyapunovProfile::build(&spec, &light()).unwrap();
    // L is increasing and convex in η
    for k in 1..p.l_table.len() {
        assert!(p.l_table[k] > p.l_table[k - 1]);
        let slack = 3.0 * (p.dl_se[k] + p.dl_se[k - 1]) + 1e-9;
        assert!(p.dl_table[k] >= p.dl_table[k - 1] - slack, "L' not increasing at {k}");
    }
    // speed squeezed between the homogeneous speeds of ei and es
    assert!(p.v0 >= (2.0 * spec.ei).sqrt() - 1e-6 && p.v0 <= (2.0 * spec.es).sqrt() + 1e-6, "v0 = {}", p.v0);
    assert!(p.v0 > p.vc);
    assert!((p.lyapunov_exponent(p.v0)).abs() < 1e-6);
    // η̄ decreasing in v; Λ concave and decreasing
    let vs: Vec<f64> = (0..=20).map(|i| p.vc + 1e-3 + i as f64 * 0.05).collect();
    let eb: Vec<f64> = vs.iter().map(|&v| p.eta_bar(v).unwrap()).collect();
    assert!(eb.windows(2).all(|w| w[1] < w[0]));
    let lam: Vec<f64> = vs.iter().map(|&v| p.lyapunov_exponent(v)).collect();
    assert!(lam.windows(2).all(|w| w[1] < w[0]));
    for w in lam.windows(3) {
        assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-6, "Lambda not concave: {w:?}");
    }
}

#[test]
fn profile_is_reproducible() {
    let spec = PotentialSpec::matern_bump(1.5, 1.0, 0.5, 11);
    let cfg = light();
    let a = LyapunovProfile::build(&spec, &cfg).unwrap();
    let b = LyapunovProfile::build(&spec, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}
