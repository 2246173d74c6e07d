use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::front::SolveOptions;
use crate::pamsolve::solve_pam;
use crate::stats::{mean_se, ols};

use super::{env_field, profile, require_vel, ExperimentReport, Record, RunContext};

const T_GRID: [f64; 2] = [100.0, 200.0];
const N_SPACE: usize = 6;

/// Slope a of y ≈ a·h + b·h².
fn slope_through_origin(h: &[f64], y: &[f64]) -> Result<f64> {
    let h2: Vec<f64> = h.iter().map(|h| h * h).collect();
    ols(&[h.to_vec(), h2], y)
        .map(|r| r.coef[0])
        .ok_or_else(|| Error::Degenerate("too few perturbation points".into()))
}

/// Space offsets from ln t up to t^0.6.
fn space_offsets(t: f64) -> Vec<f64> {
    let (lo, hi) = (t.ln(), t.powf(0.6));
    (0..N_SPACE).map(|i| lo + (hi - lo) * i as f64 / (N_SPACE - 1) as f64).collect()
}

/// Time and space increments of ln u around the ray x = vt against
/// es − η̄(v) and L(η̄(v)).
pub fn run_perturbation_diag(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let p = profile(cfg)?;
    require_vel(&p)?;
    let v = e.velocity.unwrap_or(p.v0);
    let eta_bar = p.eta_bar(v)?;
    let time_target = p.es - eta_bar;
    let space_target = p.l_at(eta_bar);
    let ts = e.grid_or(&e.t_grid, &T_GRID);
    let hs = e.grid_or(&e.h_grid, &(1..=10).map(f64::from).collect::<Vec<_>>());
    let h_max = hs.iter().cloned().fold(0.0, f64::max);
    let horizon = ts.iter().cloned().fold(0.0, f64::max) + h_max;
    let mut snaps: Vec<f64> = Vec::new();
    for &t in &ts {
        snaps.push(t);
        snaps.extend(hs.iter().map(|h| t + h));
    }
    let seeds = e.seed_indices(4);
    let rows = super::fan_out(ctx, "perturbation_diag", &seeds, |&s| {
        let field = env_field(cfg, s)?;
        let opts = SolveOptions::new(horizon, vec![e.level_pam]).with_snapshots(snaps.clone());
        let traj = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &opts)?;
        let ln_u = |t: f64, x: f64| -> Result<f64> {
            traj.snapshot_at(t)
                .and_then(|sn| sn.ln_u(x))
                .ok_or_else(|| Error::Domain(format!("ln u({t}, {x}) outside the stored window")))
        };
        let mut r = Record::new(s);
        for &t in &ts {
            let x = v * t;
            let base = ln_u(t, x)?;
            let yt: Vec<f64> = hs.iter().map(|&h| Ok(ln_u(t + h, x)? - base)).collect::<Result<_>>()?;
            let hx = space_offsets(t);
            let yx: Vec<f64> = hx.iter().map(|&h| Ok(ln_u(t, x + h)? - base)).collect::<Result<_>>()?;
            let a_t = slope_through_origin(&hs, &yt)?;
            let a_x = slope_through_origin(&hx, &yx)?;
            let dev_t = hs.iter().zip(&yt).map(|(h, y)| (y / h - time_target).abs()).fold(0.0, f64::max);
            let dev_x = hx.iter().zip(&yx).map(|(h, y)| (y / h - space_target).abs()).fold(0.0, f64::max);
            r.set(&format!("time_slope_{t}"), a_t)
                .set(&format!("space_slope_{t}"), a_x)
                .set(&format!("time_max_dev_{t}"), dev_t)
                .set(&format!("space_max_dev_{t}"), dev_x);
        }
        Ok(r)
    })?;
    let mut rep = ExperimentReport::new("perturbation_diag", cfg, &seeds);
    rep.aggregate("v", v);
    rep.aggregate("time_target", time_target);
    rep.aggregate("space_target", space_target);
    let tol = e.tolerance("slope_abs", 1e-2);
    let mut errs = Vec::new();
    for &t in &ts {
        let et: Vec<f64> = rows.iter().map(|r| (r.get(&format!("time_slope_{t}")) - time_target).abs()).collect();
        let ex: Vec<f64> = rows.iter().map(|r| (r.get(&format!("space_slope_{t}")) - space_target).abs()).collect();
        let (mt, mx) = (mean_se(&et), mean_se(&ex));
        rep.aggregate(&format!("time_slope_error_{t}"), mt);
        rep.aggregate(&format!("space_slope_error_{t}"), mx);
        errs.push((t, mt, mx));
    }
    if p.spec.is_constant() {
        let (t, mt, mx) = errs[0];
        rep.verdict(None, "time_slope", mt.value <= tol, format!("t = {t}: |slope - {time_target:.4}| = {:.2e}", mt.value));
        rep.verdict(None, "space_slope", mx.value <= tol, format!("t = {t}: |slope - {space_target:.4}| = {:.2e}", mx.value));
    } else if errs.len() >= 2 {
        let (t0, a0, b0) = errs[0];
        let (t1, a1, b1) = errs[errs.len() - 1];
        let shrinks = |a: crate::stats::Estimate, b: crate::stats::Estimate| {
            b.value <= a.value + 2.0 * (a.se * a.se + b.se * b.se).sqrt()
        };
        rep.verdict(
            None,
            "deviations_shrink",
            shrinks(a0, a1) && shrinks(b0, b1),
            format!(
                "time: {:.3e} (t={t0}) -> {:.3e} (t={t1}); space: {:.3e} -> {:.3e}",
                a0.value, a1.value, b0.value, b1.value
            ),
        );
    }
    rep.records = rows;
    Ok(rep)
}
