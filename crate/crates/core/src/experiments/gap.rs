use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::front::SolveOptions;
use crate::kppsolve::solve_kpp;
use crate::pamsolve::solve_pam;
use crate::stats::{linear_fit, mean_se, ols};

use super::{env_field, profile, require_vel, trace_window, ExperimentReport, Record, RunContext};

/// Gap m̄^M(t) − m^ε(t) between the PAM and F-KPP fronts started from the
/// same data, with the random-medium speed check at `speed_time`.
pub fn run_log_gap(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let p = profile(cfg)?;
    require_vel(&p)?;
    let seeds = e.seed_indices(10);
    let (m_lvl, eps) = (e.level_pam, e.level_kpp);
    let (t0, t1) = (e.t_min, e.t_max);
    let floor = e.tolerance("gap_floor", 1e-3);
    let speed_time = e.tolerance("speed_time", 200.0);
    let speed_tol = e.tolerance("speed_rel", 0.05);
    let v0 = p.v0;
    let rows = super::fan_out(ctx, "log_gap", &seeds, |&s| {
        let field = env_field(cfg, s)?;
        let pam = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &SolveOptions::new(t1, vec![m_lvl]))?;
        let kpp = solve_kpp(
            &field,
            &cfg.kpp.nonlinearity,
            &cfg.kpp.ic,
            &cfg.kpp.grid(),
            &SolveOptions::new(t1, vec![eps]),
        )?;
        let tp = pam.trace(m_lvl).expect("tracked level");
        let tk = kpp.trace(eps).expect("tracked level");
        if tp.times.len() != tk.times.len() {
            return Err(Error::Config("pam and kpp need the same dt".into()));
        }
        let gap: Vec<f64> = tp.positions.iter().zip(&tk.positions).map(|(a, b)| a - b).collect();
        let min_gap = gap.iter().cloned().fold(f64::INFINITY, f64::min);
        let every = (1.0 / pam.dt).round().max(1.0) as usize;
        let (ts, gs) = trace_window(&tp.times, &gap, t0, t1, every);
        let ln_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ln_fit = linear_fit(&ln_t, &gs).ok_or_else(|| Error::Degenerate("too few fit points".into()))?;
        let full = ols(&[vec![1.0; ts.len()], ln_t, ts.clone()], &gs)
            .ok_or_else(|| Error::Degenerate("too few fit points".into()))?;
        let mut r = Record::new(s);
        r.set("min_gap", min_gap)
            .set("gap_end", *gap.last().unwrap_or(&f64::NAN))
            .set("ln_slope", ln_fit.coef[1])
            .set("ln_slope_full", full.coef[1])
            .set("t_coef", full.coef[2])
            .set("t_coef_se", full.se[2])
            .set("kpp_max_clamp", kpp.max_clamp);
        if speed_time <= t1 {
            r.set("speed_pam", pam.front(m_lvl, speed_time)? / speed_time)
                .set("speed_kpp", kpp.front(eps, speed_time)? / speed_time);
        }
        Ok(r)
    })?;

    let mut rep = ExperimentReport::new("log_gap", cfg, &seeds);
    rep.aggregate("v0", v0);
    rep.aggregate("vc", p.vc);
    let min_gap = rows.iter().map(|r| r.get("min_gap")).fold(f64::INFINITY, f64::min);
    let gamma: Vec<f64> = rows.iter().map(|r| r.get("t_coef")).collect();
    let g = mean_se(&gamma);
    let beta = mean_se(&rows.iter().map(|r| r.get("ln_slope")).collect::<Vec<_>>());
    rep.aggregate("min_gap", min_gap);
    rep.aggregate("t_coef", g);
    rep.aggregate("ln_slope", beta);
    rep.verdict(Some(9), "gap_nonnegative", min_gap >= -floor, format!("min gap {min_gap:.3e} ≥ -{floor}"));
    let ok = if g.se > 0.0 { g.value.abs() <= 3.0 * g.se } else { g.value == 0.0 };
    rep.verdict(
        Some(9),
        "no_superlog_trend",
        ok,
        format!("mean t-coefficient {:.3e} ± {:.3e} over {} seeds", g.value, g.se, gamma.len()),
    );
    if speed_time <= t1 {
        let sp: Vec<f64> = rows.iter().map(|r| r.get("speed_pam")).collect();
        let worst = sp.iter().map(|s| (s / v0 - 1.0).abs()).fold(0.0, f64::max);
        rep.aggregate("speed_pam", mean_se(&sp));
        rep.verdict(
            Some(8),
            "front_speed",
            worst <= speed_tol,
            format!("max |m̄({speed_time})/{speed_time} / v0 - 1| = {worst:.4} (v0 = {v0:.4}, tol {speed_tol})"),
        );
    }
    rep.records = rows;
    Ok(rep)
}
