use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::front::SolveOptions;
use crate::lyapunov::{empirical_legendre_process, sigma_v2, LyapunovProfile};
use crate::pamsolve::solve_pam;
use crate::stats::{anderson_darling_normal, correlation, ks_normal, mean_se, variance_se, Estimate};

use super::{env_field, profile, require_vel, ExperimentReport, Record, RunContext};

const N_GRID: [f64; 3] = [50.0, 100.0, 200.0];
const DEGENERATE_SEEDS: usize = 4;

fn key(prefix: &str, n: f64) -> String {
    format!("{prefix}_{n}")
}

/// Moments and goodness of fit of standardized samples at each n, with the
/// verdicts evaluated at the largest n.
fn clt_verdicts(rep: &mut ExperimentReport, criterion: Option<u8>, ns: &[f64], samples: &[Vec<f64>]) {
    let e = &rep.config.experiment;
    let (vlo, vhi) = (e.tolerance("variance_lo", 0.5), e.tolerance("variance_hi", 1.6));
    let k_mean = e.tolerance("mean_se", 4.0);
    let ks_min = e.tolerance("ks_p", 0.01);
    let mut vars: Vec<Estimate> = Vec::new();
    for (n, z) in ns.iter().zip(samples) {
        let m = mean_se(z);
        let v = variance_se(z);
        let ks = ks_normal(z);
        let ad = anderson_darling_normal(z);
        rep.aggregate(&key("mean", *n), m);
        rep.aggregate(&key("variance", *n), v);
        rep.aggregate(&key("ks", *n), ks);
        rep.aggregate(&key("ad", *n), ad);
        vars.push(v);
    }
    let last = samples.len() - 1;
    let n = ns[last];
    let z = &samples[last];
    let m = mean_se(z);
    let v = vars[last];
    let ks = ks_normal(z);
    rep.verdict(
        criterion,
        "mean",
        m.value.abs() <= k_mean * m.se,
        format!("n = {n}: mean {:.4} ± {:.4} ({} seeds)", m.value, m.se, z.len()),
    );
    rep.verdict(
        criterion,
        "variance",
        v.value >= vlo && v.value <= vhi,
        format!("n = {n}: variance {:.4} in [{vlo}, {vhi}]", v.value),
    );
    rep.verdict(criterion, "ks", ks.p_value > ks_min, format!("n = {n}: KS D = {:.4}, p = {:.4}", ks.statistic, ks.p_value));
    // |var − 1| may not grow between consecutive n beyond two standard errors
    let mut trend = true;
    for w in vars.windows(2) {
        if (w[1].value - 1.0).abs() > (w[0].value - 1.0).abs() + 2.0 * w[1].se {
            trend = false;
        }
    }
    let listing: Vec<String> = ns.iter().zip(&vars).map(|(n, v)| format!("{n}: {:.3}", v.value)).collect();
    rep.verdict(criterion, "variance_trend", trend, format!("variance by n: {}", listing.join(", ")));
}

fn degenerate(p: &LyapunovProfile, s2: Option<Estimate>) -> bool {
    match s2 {
        None => true,
        Some(s) => p.spec.is_constant() || s.value <= 3.0 * s.se || s.value <= 0.0,
    }
}

/// Standardized fronts Z = (m̄(n) − v₀n)/√(nσ̃²) across environments.
pub fn run_front_clt(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let p = profile(cfg)?;
    require_vel(&p)?;
    let ns = e.grid_or(&e.n_grid, &N_GRID);
    let n_max = ns.iter().cloned().fold(0.0, f64::max);
    let a = e.level_pam;
    let deg = degenerate(&p, p.sigma_tilde2);
    let mut seeds = e.seed_indices(300);
    if deg {
        seeds.truncate(DEGENERATE_SEEDS);
    }
    let v0 = p.v0;
    let rows = super::fan_out(ctx, "front_clt", &seeds, |&s| {
        let field = env_field(cfg, s)?;
        let traj = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &SolveOptions::new(n_max, vec![a]))?;
        let mut r = Record::new(s);
        for &n in &ns {
            r.set(&key("m", n), traj.front(a, n)?);
        }
        Ok(r)
    })?;
    let mut rep = ExperimentReport::new("front_clt", cfg, &seeds);
    rep.aggregate("v0", v0);
    rep.aggregate("sigma_tilde2", p.sigma_tilde2);
    rep.aggregate("n_grid", &ns);
    rep.aggregate("degenerate", deg);
    if deg {
        let spread: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let d: Vec<f64> = rows.iter().map(|r| (r.get(&key("m", n)) - v0 * n) / n.sqrt()).collect();
                let m = d.iter().sum::<f64>() / d.len() as f64;
                d.iter().map(|x| (x - m).abs()).fold(0.0, f64::max)
            })
            .collect();
        rep.aggregate("centered_spread", &spread);
        rep.verdict(
            Some(11),
            "degenerate",
            true,
            format!("sigma_tilde^2 degenerate ({:?}); spread of (m - v0 n)/sqrt(n) by n: {spread:?}", p.sigma_tilde2),
        );
        rep.records = rows;
        return Ok(rep);
    }
    let s2 = p.sigma_tilde2.expect("non-degenerate").value;
    let mut samples = Vec::new();
    let mut rows = rows;
    for &n in &ns {
        let z: Vec<f64> = rows
            .iter_mut()
            .map(|r| {
                let z = (r.get(&key("m", n)) - v0 * n) / (n * s2).sqrt();
                r.set(&key("z", n), z);
                z
            })
            .collect();
        samples.push(z);
    }
    if ns.len() >= 3 {
        let inc = |r: &Record, i: usize| r.get(&key("m", ns[i + 1])) - r.get(&key("m", ns[i]));
        let a: Vec<f64> = rows.iter().map(|r| inc(r, 0)).collect();
        let b: Vec<f64> = rows.iter().map(|r| inc(r, 1)).collect();
        rep.aggregate("increment_correlation", correlation(&a, &b));
    }
    clt_verdicts(&mut rep, Some(11), &ns, &samples);
    rep.records = rows;
    Ok(rep)
}

/// Standardized ln u(n, vn) across environments, plus the Legendre-process route.
pub fn run_logu_clt(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let p = profile(cfg)?;
    require_vel(&p)?;
    let v = e.velocity.unwrap_or(p.v0);
    if !(v > p.vc) && !p.spec.is_constant() {
        return Err(Error::Precondition(format!("velocity {v} not above v_c = {}", p.vc)));
    }
    let s2 = if (v - p.v0).abs() < 1e-12 && p.sigma2_v0.is_some() {
        p.sigma2_v0
    } else if p.spec.is_constant() {
        Some(Estimate::exact(0.0))
    } else {
        let lc = &cfg.lyapunov;
        Some(sigma_v2(&p.spec, v, p.eta_bar(v)?, lc.n_units, p.lag_cutoff, lc.n_env, &lc.bvp)?)
    };
    let ns = e.grid_or(&e.n_grid, &N_GRID);
    let n_max = ns.iter().cloned().fold(0.0, f64::max);
    let lambda = p.lyapunov_exponent(v);
    let deg = degenerate(&p, s2);
    let mut seeds = e.seed_indices(300);
    if deg {
        seeds.truncate(DEGENERATE_SEEDS);
    }
    let rows = super::fan_out(ctx, "logu_clt", &seeds, |&s| {
        let field = env_field(cfg, s)?;
        let opts = SolveOptions::new(n_max, vec![e.level_pam]).with_snapshots(ns.clone());
        let traj = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &opts)?;
        let mut r = Record::new(s);
        for &n in &ns {
            let snap = traj
                .snapshot_at(n)
                .ok_or_else(|| Error::Domain(format!("no snapshot at {n}")))?;
            let lu = snap
                .ln_u(v * n)
                .ok_or_else(|| Error::Domain(format!("x = {} outside the window at t = {n}", v * n)))?;
            r.set(&key("ln_u", n), lu);
        }
        if !deg {
            let w = empirical_legendre_process(&field, v, v * n_max, &p)?;
            r.set("w", w.unwrap_or(f64::NAN));
        }
        Ok(r)
    })?;
    let mut rep = ExperimentReport::new("logu_clt", cfg, &seeds);
    rep.aggregate("v", v);
    rep.aggregate("lambda", lambda);
    rep.aggregate("sigma_v2", s2);
    rep.aggregate("degenerate", deg);
    let mut rows = rows;
    if deg {
        let dev: Vec<f64> = ns
            .iter()
            .map(|&n| {
                rows.iter()
                    .map(|r| ((r.get(&key("ln_u", n)) - n * lambda) / n.sqrt()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        rep.aggregate("max_abs_centered", &dev);
        rep.verdict(None, "degenerate", true, format!("sigma_v^2 degenerate; max |ln u - nΛ|/sqrt(n) by n: {dev:?}"));
        rep.records = rows;
        return Ok(rep);
    }
    let s2 = s2.expect("non-degenerate").value;
    let mut samples = Vec::new();
    for &n in &ns {
        let z: Vec<f64> = rows
            .iter_mut()
            .map(|r| {
                let z = (r.get(&key("ln_u", n)) - n * lambda) / (n * v * s2).sqrt();
                r.set(&key("s", n), z);
                z
            })
            .collect();
        samples.push(z);
    }
    // ln u − nΛ ≈ −√x·W at x = vn
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in rows.iter_mut() {
        let sw = -r.get("w") / s2.sqrt();
        r.set("s_w", sw);
        if sw.is_finite() {
            a.push(r.get(&key("s", n_max)));
            b.push(sw);
        }
    }
    clt_verdicts(&mut rep, None, &ns, &samples);
    let rho = correlation(&a, &b);
    let rho_min = e.tolerance("route_correlation", 0.9);
    rep.aggregate("route_correlation", rho);
    rep.aggregate("w_route_found", a.len());
    rep.verdict(
        None,
        "route_correlation",
        rho > rho_min,
        format!("corr(ln-u route, W route) = {rho:.4} over {} seeds", a.len()),
    );
    rep.records = rows;
    Ok(rep)
}
