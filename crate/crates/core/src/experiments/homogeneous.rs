use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::front::SolveOptions;
use crate::kppsolve::solve_kpp;
use crate::pamsolve::solve_pam;
use crate::stats::{linear_fit, ols};
use crate::PotentialField;

use super::{trace_window, ExperimentReport, Record, RunContext};

/// Homogeneous medium: front speeds and the logarithmic corrections of both
/// fronts and of their gap.
pub fn run_homogeneous_baseline(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    if !cfg.potential.is_constant() {
        return Err(Error::Precondition("homogeneous_baseline needs a constant potential".into()));
    }
    let e = &cfg.experiment;
    let field = PotentialField::new(cfg.potential.clone())?;
    let speed = (2.0 * cfg.potential.ei).sqrt();
    let (a, eps) = (e.level_pam, e.level_kpp);
    let (t0, t1) = (e.t_min, e.t_max);
    ctx.check()?;
    let pam = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &SolveOptions::new(t1, vec![a]))?;
    ctx.check()?;
    let kpp = solve_kpp(
        &field,
        &cfg.kpp.nonlinearity,
        &cfg.kpp.ic,
        &cfg.kpp.grid(),
        &SolveOptions::new(t1, vec![eps]),
    )?;
    let tp = pam.trace(a).expect("tracked level");
    let tk = kpp.trace(eps).expect("tracked level");
    let every = (1.0 / pam.dt).round().max(1.0) as usize;
    let (ts, mp) = trace_window(&tp.times, &tp.positions, t0, t1, every);
    let (tsk, mk) = trace_window(&tk.times, &tk.positions, t0, t1, (1.0 / kpp.dt).round().max(1.0) as usize);
    if ts.len() != tsk.len() {
        return Err(Error::Config("pam and kpp need the same dt".into()));
    }
    let ln_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let dev = |m: &[f64]| -> Vec<f64> { m.iter().zip(&ts).map(|(m, t)| m - speed * t).collect() };
    let fit_p = linear_fit(&ln_t, &dev(&mp)).ok_or_else(|| Error::Degenerate("too few fit points".into()))?;
    let fit_k = linear_fit(&ln_t, &dev(&mk)).ok_or_else(|| Error::Degenerate("too few fit points".into()))?;
    let gap: Vec<f64> = mp.iter().zip(&mk).map(|(p, k)| p - k).collect();
    let fit_g = linear_fit(&ln_t, &gap).ok_or_else(|| Error::Degenerate("too few fit points".into()))?;
    let free = |m: &[f64]| ols(&[vec![1.0; ts.len()], ts.clone(), ln_t.clone()], m);
    let lin_p = free(&mp).ok_or_else(|| Error::Degenerate("too few fit points".into()))?;
    let lin_k = free(&mk).ok_or_else(|| Error::Degenerate("too few fit points".into()))?;

    let m_pam = pam.front(a, t1)?;
    let m_kpp = kpp.front(eps, t1)?;
    let (rp, rk) = (m_pam / t1, m_kpp / t1);

    let mut rep = ExperimentReport::new("homogeneous_baseline", cfg, &[0]);
    let mut r = Record::new(0);
    r.set("m_pam", m_pam)
        .set("m_kpp", m_kpp)
        .set("ratio_pam", rp)
        .set("ratio_kpp", rk)
        .set("pam_ln_coef", fit_p.coef[1])
        .set("kpp_ln_coef", fit_k.coef[1])
        .set("gap_ln_slope", fit_g.coef[1])
        .set("pam_linear_coef", lin_p.coef[1])
        .set("kpp_linear_coef", lin_k.coef[1])
        .set("kpp_max_clamp", kpp.max_clamp);
    rep.records.push(r);
    rep.aggregate("speed", speed);
    rep.aggregate("fit_window", [t0, t1]);
    rep.aggregate("pam_ln_fit", &fit_p);
    rep.aggregate("kpp_ln_fit", &fit_k);
    rep.aggregate("gap_ln_fit", &fit_g);
    rep.aggregate("pam_free_fit", &lin_p);
    rep.aggregate("kpp_free_fit", &lin_k);

    let tol = e.tolerance("ratio_rel", 0.01);
    let rel_p = (rp / speed - 1.0).abs();
    let rel_k = (rk / speed - 1.0).abs();
    rep.verdict(Some(7), "pam_ratio", rel_p <= tol, format!("m̄({t1})/{t1} = {rp:.5}, rel. dev {rel_p:.4} (tol {tol})"));
    rep.verdict(Some(7), "kpp_ratio", rel_k <= tol, format!("m({t1})/{t1} = {rk:.5}, rel. dev {rel_k:.4} (tol {tol})"));
    let band = |x: f64, lo: f64, hi: f64| x >= lo && x <= hi;
    let (bp, bk, bg) = (fit_p.coef[1], fit_k.coef[1], fit_g.coef[1]);
    rep.verdict(Some(7), "pam_ln_coef", band(bp, -0.6, -0.15), format!("{bp:.4} in [-0.6, -0.15]"));
    rep.verdict(Some(7), "kpp_ln_coef", band(bk, -1.5, -0.6), format!("{bk:.4} in [-1.5, -0.6]"));
    rep.verdict(Some(7), "gap_ln_slope", band(bg, 0.35, 1.15), format!("{bg:.4} in [0.35, 1.15]"));
    let (cp, ck) = (lin_p.coef[1], lin_k.coef[1]);
    rep.verdict(
        None,
        "linear_coefficients",
        (cp / speed - 1.0).abs() <= tol && (ck / speed - 1.0).abs() <= tol,
        format!("fitted t-coefficients {cp:.5}, {ck:.5} vs {speed:.5}"),
    );
    Ok(rep)
}
