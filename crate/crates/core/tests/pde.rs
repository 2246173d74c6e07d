use proptest::prelude::*;
use randfront::bbmre::OffspringLaw;
use randfront::envgen::{PotentialField, PotentialSpec};
use randfront::error::Error;
use randfront::front::{GridConfig, InitialCondition, SolutionTrajectory, SolveOptions};
use randfront::kppsolve::*;
use randfront::pamsolve::*;
use randfront::stats::linear_fit;
use statrs::distribution::{ContinuousCDF, Normal};

fn flat() -> PotentialField {
    PotentialField::new(PotentialSpec::constant(1.0)).unwrap()
}

fn matern(seed: u64) -> PotentialField {
    PotentialField::new(PotentialSpec::matern_bump(1.5, 1.0, 0.5, seed)).unwrap()
}

fn phi(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

fn ln_at(traj: &SolutionTrajectory, t: f64, x: f64) -> f64 {
    traj.snapshot_at(t).and_then(|s| s.ln_u(x)).expect("inside window")
}

fn pam(field: &PotentialField, ic: &InitialCondition, horizon: f64, snaps: Vec<f64>) -> SolutionTrajectory {
    let o = SolveOptions::new(horizon, vec![0.5]).with_snapshots(snaps);
    solve_pam(field, ic, &GridConfig::default(), &o).unwrap()
}

#[test]
fn pam_homogeneous_closed_form() {
    let tr = pam(&flat(), &InitialCondition::heaviside(), 4.0, vec![1.0, 4.0]);
    assert!((ln_at(&tr, 1.0, 0.0).exp() - std::f64::consts::E / 2.0).abs() < 1e-3);
    let want = 4f64.exp() * phi(-1.0);
    assert!((ln_at(&tr, 4.0, 2.0).exp() - want).abs() < 1e-2);
    for x in [-3.0, 0.5, 3.0] {
        let want = 4.0 + phi(-x / 2.0).ln();
        assert!((ln_at(&tr, 4.0, x) - want).abs() < 2e-3, "x = {x}");
    }
}

#[test]
fn pam_is_linear_in_data() {
    let f = matern(3);
    let a = pam(&f, &InitialCondition::heaviside(), 5.0, vec![5.0]);
    let b = pam(&f, &InitialCondition::scaled(3.0), 5.0, vec![5.0]);
    for x in [-10.0, 0.0, 4.0, 9.0] {
        assert!((ln_at(&b, 5.0, x) - ln_at(&a, 5.0, x) - 3f64.ln()).abs() < 1e-9);
    }
}

#[test]
fn pam_front_examples() {
    let o = SolveOptions::new(100.0, vec![std::f64::consts::E / 2.0, 0.5]).with_snapshots(vec![1.0, 100.0]);
    let tr = solve_pam(&flat(), &InitialCondition::heaviside(), &GridConfig::default(), &o).unwrap();
    assert!(front_pam(&tr, std::f64::consts::E / 2.0, 1.0).unwrap().abs() <= 0.05);
    let m = front_pam(&tr, 0.5, 100.0).unwrap();
    assert!((m - 139.79).abs() < 3.0, "{m}");
}

#[test]
fn pam_breakpoints() {
    let o = SolveOptions::new(80.0, vec![0.5]).with_probes(vec![-2.0, 0.0, 25.0, 50.0, 100.0]).with_snapshot_every(1.0);
    let tr = solve_pam(&flat(), &InitialCondition::heaviside(), &GridConfig::default(), &o).unwrap();
    assert_eq!(breakpoint_inverse(&tr, -2.0, 0.5), 0.0);
    assert_eq!(breakpoint_inverse(&tr, 0.0, 0.5), 0.0);
    let t100 = breakpoint_inverse(&tr, 100.0, 0.5);
    assert!((t100 / 100.0 * 2f64.sqrt() - 1.0).abs() < 0.05, "{t100}");
    assert!(breakpoint_inverse(&tr, 25.0, 0.5) <= breakpoint_inverse(&tr, 50.0, 0.5));
    for t in [10.0, 30.0, 60.0] {
        let m = tr.front(0.5, t).unwrap();
        let tx = tr.breakpoint_from_snapshots(m, 0.5);
        assert!(tx <= t + 1e-9 && tx >= t - 3.0, "t = {t}: T = {tx}");
    }
}

#[test]
fn window_breach_is_an_error() {
    let g = GridConfig {
        w_right: 2.0,
        recenter: false,
        ..GridConfig::default()
    };
    let err = solve_pam(&flat(), &InitialCondition::heaviside(), &g, &SolveOptions::new(20.0, vec![0.5])).unwrap_err();
    assert!(matches!(err, Error::WindowBreach { .. }));
    assert!(err.to_string().contains("W_R"));
}

#[test]
fn feynman_kac_examples() {
    let est = fk_mc_pam(&flat(), 1.0, 0.0, &InitialCondition::heaviside(), 100_000, 0.01, 9);
    assert!(est.z_against(std::f64::consts::E / 2.0) <= 3.0, "{est:?}");
    let f = matern(4);
    let heav = fk_mc_pam(&f, 2.0, 1.0, &InitialCondition::heaviside(), 20_000, 0.01, 5);
    let boxed = fk_mc_pam(&f, 2.0, 1.0, &InitialCondition::boxed(0.5), 20_000, 0.01, 5);
    assert!(boxed.value <= heav.value);
}

#[test]
fn threshold_gap_stays_bounded() {
    let o = SolveOptions::new(300.0, vec![0.1, 2.0]);
    let tr = solve_pam(&matern(8), &InitialCondition::heaviside(), &GridConfig::default(), &o).unwrap();
    let lo = tr.trace(0.1).unwrap();
    let hi = tr.trace(2.0).unwrap();
    let mut ts = Vec::new();
    let mut d = Vec::new();
    for (i, &t) in lo.times.iter().enumerate() {
        if t >= 50.0 && i % 100 == 0 {
            ts.push(t);
            d.push(lo.positions[i] - hi.positions[i]);
        }
    }
    assert!(d.iter().all(|g| *g >= 0.0));
    let slope = linear_fit(&ts, &d).unwrap().coef[1];
    assert!(slope.abs() <= 0.01, "{slope}");
}

#[test]
fn kpp_homogeneous() {
    let o = SolveOptions::new(150.0, vec![0.5]).with_snapshots(vec![0.0, 10.0]);
    let tr = solve_kpp(&flat(), &Nonlinearity::Logistic, &InitialCondition::heaviside(), &GridConfig::default(), &o).unwrap();
    assert!(ln_at(&tr, 10.0, 0.0).exp() > 0.95);
    let m = front_kpp(&tr, 0.5, 150.0).unwrap();
    let bramson = 2f64.sqrt() * 150.0 - 3.0 / (2.0 * 2f64.sqrt()) * 150f64.ln();
    assert!((m - bramson).abs() < 3.0, "{m} vs {bramson}");
    assert_eq!(front_kpp(&tr, 0.5, 0.0).unwrap(), 0.0);
}

#[test]
fn gm_family_examples() {
    for n in 1..8 {
        let g = gm_family(n).unwrap();
        let h = gm_family(n + 1).unwrap();
        assert_eq!(g.eval(1.0), 0.0);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            assert!(h.eval(x) <= g.eval(x) + 1e-15);
        }
    }
    assert_eq!(dominating_gm(&Nonlinearity::Logistic).unwrap(), 1);
    assert_eq!(dominating_gm(&gm_family(5).unwrap()).unwrap(), 5);
    let bad = Nonlinearity::from_fn(|w| w * (1.0 - w) * (1.0 + w) / 1.2, |w| (1.0 + 2.0 * w - 3.0 * w * w) / 1.2, 200);
    assert!(dominating_gm(&bad).is_err());
    let neg = Nonlinearity::from_fn(|w| if (w - 0.5).abs() < 1e-9 { -0.1 } else { w * (1.0 - w) }, |w| 1.0 - 2.0 * w, 10);
    assert!(!check_sc(&neg).positive);
}

#[test]
fn offspring_examples() {
    let f = offspring_to_F(&OffspringLaw::from_pairs(&[(2, 1.0)])).unwrap();
    let g = offspring_to_F(&OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)])).unwrap();
    for i in 0..=20 {
        let u = i as f64 / 20.0;
        assert!((f.eval(u) - u * (1.0 - u)).abs() < 1e-15);
        let want = 1.0 - u - 0.5 * (1.0 - u) - 0.5 * (1.0 - u).powi(3);
        assert!((g.eval(u) - want).abs() < 1e-14);
    }
    assert!((g.deriv(0.0) - 1.0).abs() < 1e-12);
    assert!(offspring_to_F(&OffspringLaw::from_pairs(&[(1, 0.5), (2, 0.5)])).is_err());
}

/// Mean-two law on {1, 2, k}.
fn law(s: f64, k: usize) -> OffspringLaw {
    let pk = (1.0 - s) / (k as f64 - 1.0);
    OffspringLaw::from_pairs(&[(1, 1.0 - s - pk), (2, s), (k, pk)])
}

/// Largest violation of ln a ≤ ln b over the nodes of `a` inside b's window.
fn excess(a: &SolutionTrajectory, b: &SolutionTrajectory, t: f64) -> f64 {
    let sa = a.snapshot_at(t).unwrap();
    let sb = b.snapshot_at(t).unwrap();
    (0..sa.values.len())
        .filter_map(|j| {
            let la = sa.ln_u_node(j);
            sb.ln_u(sa.x(j)).filter(|_| la > -600.0).map(|lb| la - lb)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn offspring_nonlinearity_is_admissible(s in 0.0f64..0.95, k in 3usize..9) {
        let f = offspring_to_F(&law(s, k)).unwrap();
        let r = check_sc(&f);
        prop_assert!(r.passes(), "{r:?}");
        prop_assert_eq!(f.eval(0.0), 0.0);
        prop_assert!(f.eval(1.0).abs() < 1e-15);
        prop_assert!((f.deriv(0.0) - 1.0).abs() < 1e-9);
        let m = dominating_gm(&f).unwrap();
        let g = gm_family(m).unwrap();
        for i in 0..=1000 {
            let w = i as f64 / 1000.0;
            prop_assert!(g.eval(w) <= f.eval(w) + 1e-12);
        }
    }

    #[test]
    fn comparison_and_domination(seed in any::<u64>(), dp in 0.1f64..0.9, n in 1u32..5) {
        let f = matern(seed);
        let g = GridConfig::default();
        let times = vec![2.0, 4.0, 5.0];
        let o = SolveOptions::new(5.0, vec![0.5]).with_snapshots(times.clone());
        let nl = gm_family(n).unwrap();
        let heav = InitialCondition::heaviside();
        let boxed = InitialCondition::boxed(dp);
        let uh = solve_pam(&f, &heav, &g, &o).unwrap();
        let ub = solve_pam(&f, &boxed, &g, &o).unwrap();
        let wh = solve_kpp(&f, &nl, &heav, &g, &o).unwrap();
        let wb = solve_kpp(&f, &nl, &boxed, &g, &o).unwrap();
        for &t in &times {
            prop_assert!(excess(&ub, &uh, t) <= 1e-6);
            prop_assert!(excess(&wb, &wh, t) <= 1e-6);
            prop_assert!(excess(&wh, &uh, t) <= 1e-6);
            let top = wh.snapshot_at(t).unwrap();
            prop_assert!((0..top.values.len()).all(|j| top.ln_u_node(j) <= 1e-12));
        }
        // growth: u(s, x) ≤ 2 u(t, x) for s ≤ t
        prop_assert!(excess(&uh, &uh, 2.0) <= 1e-12);
        let sa = uh.snapshot_at(2.0).unwrap();
        let sb = uh.snapshot_at(5.0).unwrap();
        for j in 0..sa.values.len() {
            if let Some(lb) = sb.ln_u(sa.x(j)) {
                prop_assert!(sa.ln_u_node(j) <= lb + 2f64.ln() + 1e-6);
            }
        }
        // Harnack between t = 4 and t = 5
        let a = uh.snapshot_at(4.0).unwrap();
        let c = f.es() + 0.5 * (2.0 / std::f64::consts::E).ln();
        let step = (1.0 / a.dx).round() as i64;
        for j in (step as usize..a.values.len() - step as usize).step_by(7) {
            let y = a.x(j);
            let m = (-step..=step)
                .filter_map(|k| sb.ln_u(y + k as f64 * a.dx))
                .fold(f64::INFINITY, f64::min);
            if m.is_finite() && a.ln_u_node(j) > -600.0 {
                prop_assert!(a.ln_u_node(j) <= c + m + 1e-6);
            }
        }
    }

    #[test]
    fn thresholds_nest(seed in any::<u64>(), a1 in 0.01f64..0.5, gap in 0.01f64..0.49) {
        let f = matern(seed);
        let a2 = a1 + gap;
        let o = SolveOptions::new(10.0, vec![a1, a2]);
        let u = solve_pam(&f, &InitialCondition::heaviside(), &GridConfig::default(), &o).unwrap();
        let w = solve_kpp(&f, &Nonlinearity::Logistic, &InitialCondition::heaviside(), &GridConfig::default(), &o).unwrap();
        for t in [1.0, 5.0, 10.0] {
            prop_assert!(u.front(a1, t).unwrap() >= u.front(a2, t).unwrap());
            prop_assert!(w.front(a1, t).unwrap() >= w.front(a2, t).unwrap());
        }
    }
}
