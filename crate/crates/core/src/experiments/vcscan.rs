use crate::config::RunConfig;
use crate::envgen::PotentialSpec;
use crate::error::Result;
use crate::lyapunov::LyapunovProfile;
use crate::rng::derive_seed;

use super::{ExperimentReport, Record, RunContext};

/// L(0⁻) + es·L'(0⁻) and the (v_c, v₀) ordering over a grid of bump fields.
pub fn run_vc_scan(cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    let e = &cfg.experiment;
    let a_grid = e.grid_or(&e.scan_a, &[0.1, 5.0]);
    let ei_grid = e.grid_or(&e.scan_ei, &[0.5]);
    let eps_grid = e.grid_or(&e.scan_eps, &[0.05]);
    let mut points = Vec::new();
    for &ei in &ei_grid {
        for &eps in &eps_grid {
            for &a in &a_grid {
                points.push((points.len() as u64, a, ei, eps));
            }
        }
    }
    let rows = super::fan_out(ctx, "vc_scan", &points, |&(k, a, ei, eps)| {
        let spec = PotentialSpec::matern_bump(ei, a, eps, derive_seed(cfg.base_seed, "vc-scan", k));
        let p = LyapunovProfile::build(&spec, &cfg.lyapunov)?;
        let es = spec.es;
        let c = p.l0.value + es * p.dl0.value;
        let c_se = (p.l0.se.powi(2) + (es * p.dl0.se).powi(2)).sqrt();
        let mut r = Record::new(k);
        r.set("a", a)
            .set("ei", ei)
            .set("epsilon", eps)
            .set("es", es)
            .set("l0", p.l0.value)
            .set("l0_se", p.l0.se)
            .set("dl0", p.dl0.value)
            .set("dl0_se", p.dl0.se)
            .set("criterion", c)
            .set("criterion_se", c_se)
            .set("vc", p.vc)
            .set("v0", p.v0);
        Ok(r)
    })?;
    let seeds: Vec<u64> = points.iter().map(|p| p.0).collect();
    let mut rep = ExperimentReport::new("vc_scan", cfg, &seeds);
    let beyond = |x: f64, se: f64| x.abs() > 3.0 * se;
    for &ei in &ei_grid {
        for &eps in &eps_grid {
            let mut group: Vec<&Record> = rows.iter().filter(|r| r.get("ei") == ei && r.get("epsilon") == eps).collect();
            if group.len() < 2 {
                continue;
            }
            group.sort_by(|x, y| x.get("a").total_cmp(&y.get("a")));
            let strong = group[group.len() - 1];
            let weak = group[0];
            let (c, cs) = (strong.get("criterion"), strong.get("criterion_se"));
            let tag = format!("a={}, ei={ei}, eps={eps}", strong.get("a"));
            rep.verdict(
                Some(13),
                "criterion_negative",
                c < 0.0 && beyond(c, cs),
                format!("{tag}: L(0)+es L'(0) = {c:.4} ± {cs:.4}"),
            );
            rep.verdict(
                Some(13),
                "estimates_resolved",
                beyond(strong.get("l0"), strong.get("l0_se")) && beyond(strong.get("dl0"), strong.get("dl0_se")),
                format!(
                    "{tag}: L(0) = {:.4} ± {:.4}, L'(0) = {:.4} ± {:.4}",
                    strong.get("l0"),
                    strong.get("l0_se"),
                    strong.get("dl0"),
                    strong.get("dl0_se")
                ),
            );
            rep.verdict(
                Some(13),
                "vc_above_v0",
                strong.get("vc") > strong.get("v0"),
                format!("{tag}: v_c = {:.4}, v0 = {:.4}", strong.get("vc"), strong.get("v0")),
            );
            let wtag = format!("a={}, ei={ei}, eps={eps}", weak.get("a"));
            rep.verdict(
                Some(13),
                "weak_disorder_reversed",
                weak.get("criterion") > 0.0 && weak.get("v0") > weak.get("vc"),
                format!(
                    "{wtag}: criterion {:.4}, v_c = {:.4}, v0 = {:.4}",
                    weak.get("criterion"),
                    weak.get("vc"),
                    weak.get("v0")
                ),
            );
            let decreasing = group.windows(2).all(|w| {
                let s = (w[0].get("criterion_se").powi(2) + w[1].get("criterion_se").powi(2)).sqrt();
                w[1].get("criterion") <= w[0].get("criterion") + 3.0 * s
            });
            rep.verdict(None, "criterion_decreasing_in_a", decreasing, format!("ei={ei}, eps={eps}"));
        }
    }
    rep.records = rows;
    Ok(rep)
}
