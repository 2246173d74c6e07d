use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::front::SolveOptions;
use crate::hitting::UnitChain;
use crate::pamsolve::{breakpoint_inverse, solve_pam};
use crate::stats::{linear_fit, mean};

use super::{env_field, profile, require_vel, ExperimentReport, Record, RunContext};

const X_GRID: [f64; 6] = [50.0, 100.0, 150.0, 200.0, 250.0, 300.0];

/// PDE breakpoints T_x against Σ_{i≤x} L_i(η̄)/(v₀L(η̄)).
pub fn run_breakpoint_approx(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let p = profile(cfg)?;
    require_vel(&p)?;
    let v0 = p.v0;
    let eta = p.eta_bar(v0)?;
    let l = p.l_at(eta);
    let xs = e.grid_or(&e.x_grid, &X_GRID);
    if xs.iter().any(|&x| !(x >= 2.0 && x.fract() == 0.0)) {
        return Err(Error::Config("breakpoint grid points must be integers ≥ 2".into()));
    }
    let x_max = xs.iter().cloned().fold(0.0, f64::max);
    let horizon = 1.1 * x_max / v0 + 20.0;
    let a = e.level_pam;
    let seeds = e.seed_indices(10);
    let rows = super::fan_out(ctx, "breakpoint_approx", &seeds, |&s| {
        let field = env_field(cfg, s)?;
        let opts = SolveOptions::new(horizon, vec![a]).with_probes(xs.clone());
        let traj = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &opts)?;
        let logs = UnitChain::new(&field, 1, x_max as usize, &cfg.lyapunov.bvp).logs(eta)?;
        let mut r = Record::new(s);
        let mut acc = 0.0;
        let mut done = 0usize;
        for &x in &xs {
            while done < x as usize {
                acc += logs[done];
                done += 1;
            }
            let pred = acc / (v0 * l);
            let t = breakpoint_inverse(&traj, x, a);
            r.set(&format!("t_{x}"), t)
                .set(&format!("pred_{x}"), pred)
                .set(&format!("diff_over_ln_{x}"), (t - pred).abs() / x.ln())
                .set(&format!("lln_{x}"), t / x);
        }
        Ok(r)
    })?;
    let mut rep = ExperimentReport::new("breakpoint_approx", cfg, &seeds);
    rep.aggregate("v0", v0);
    rep.aggregate("eta_bar", eta);
    rep.aggregate("l_eta_bar", l);
    let means: Vec<f64> = xs
        .iter()
        .map(|x| mean(&rows.iter().map(|r| r.get(&format!("diff_over_ln_{x}"))).collect::<Vec<_>>()))
        .collect();
    rep.aggregate("mean_diff_over_ln", &means);
    let lln: Vec<f64> = rows.iter().map(|r| r.get(&format!("lln_{x_max}")) * v0).collect();
    let worst = lln.iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max);
    let tol = e.tolerance("lln_rel", 0.05);
    rep.verdict(
        None,
        "lln",
        worst.is_finite() && worst <= tol,
        format!("max |T_x v0 / x - 1| = {worst:.4} at x = {x_max} (tol {tol})"),
    );
    if p.spec.is_constant() {
        let m = means.iter().cloned().fold(0.0, f64::max);
        rep.verdict(None, "bounded_constant", m <= 1.0, format!("max |T_x - x/v0|/ln x = {m:.4}"));
    } else if let Some(fit) = linear_fit(&xs, &means) {
        let (b, se) = (fit.coef[1], fit.se[1]);
        rep.verdict(
            None,
            "no_increasing_trend",
            b <= 3.0 * se,
            format!("slope of mean |T_x - pred|/ln x in x = {b:.3e} ± {se:.3e}"),
        );
    }
    rep.records = rows;
    Ok(rep)
}
