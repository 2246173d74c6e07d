//! Randomised F-KPP equation w_t = ½w_xx + ξF(w) and the nonlinearity toolkit.

use serde::{Deserialize, Serialize};

use crate::bbmre::OffspringLaw;
use crate::envgen::PotentialField;
use crate::error::{Error, Result};
use crate::front::{Engine, Equation, GridConfig, InitialCondition, Reaction, SolutionTrajectory, SolveOptions};
use crate::lyapunov::hermite;

/// Admissible reaction term F on [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    Logistic,
    OffspringGenerated { law: OffspringLaw },
    GmFamily { n: u32 },
    /// Samples (w, F(w), F'(w)) on an ascending grid from 0 to 1; cubic Hermite in between.
    CustomTable { w: Vec<f64>, f: Vec<f64>, df: Vec<f64> },
}

impl Nonlinearity {
    /// Tabulate a closure on n + 1 equally spaced points.
    pub fn from_fn<F: Fn(f64) -> f64, D: Fn(f64) -> f64>(f: F, df: D, n: usize) -> Self {
        let w: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        Nonlinearity::CustomTable {
            f: w.iter().map(|&x| f(x)).collect(),
            df: w.iter().map(|&x| df(x)).collect(),
            w,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Nonlinearity::Logistic => "logistic".into(),
            Nonlinearity::OffspringGenerated { .. } => "offspring_generated".into(),
            Nonlinearity::GmFamily { n } => format!("gm_{n}"),
            Nonlinearity::CustomTable { .. } => "custom_table".into(),
        }
    }

    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Nonlinearity::Logistic => w * (1.0 - w),
            Nonlinearity::OffspringGenerated { law } => {
                // F = u·q·Σ_k p_k Σ_{j<k−1} q^j with q = 1 − u
                let q = 1.0 - w;
                let mut geo = 0.0;
                let mut qj = 1.0;
                let mut acc = 0.0;
                for (k, &p) in law.p.iter().enumerate() {
                    if k >= 2 {
                        geo += qj;
                        qj *= q;
                    }
                    acc += p * geo;
                }
                w * q * acc
            }
            Nonlinearity::GmFamily { n } => {
                let q = 1.0 - w;
                let one_minus_qn = if *n <= 32 {
                    // w·Σ_{j<n} q^j keeps full precision for small w
                    let mut s = 0.0;
                    let mut qj = 1.0;
                    for _ in 0..*n {
                        s += qj;
                        qj *= q;
                    }
                    w * s
                } else {
                    -(*n as f64 * (-w).ln_1p()).exp_m1()
                };
                q / *n as f64 * one_minus_qn
            }
            Nonlinearity::CustomTable { w: ws, f, df } => hermite(ws, f, df, w.clamp(0.0, 1.0)),
        }
    }

    pub fn deriv(&self, w: f64) -> f64 {
        match self {
            Nonlinearity::Logistic => 1.0 - 2.0 * w,
            Nonlinearity::OffspringGenerated { law } => {
                let q = 1.0 - w;
                let mut s = 0.0;
                let mut qk = 1.0;
                for (k, &p) in law.p.iter().enumerate().skip(1) {
                    s += k as f64 * p * qk;
                    qk *= q;
                }
                s - 1.0
            }
            Nonlinearity::GmFamily { n } => {
                let nf = *n as f64;
                let qn = (1.0 - w).powi(*n as i32);
                -(1.0 - qn) / nf + qn
            }
            Nonlinearity::CustomTable { w: ws, f, df } => {
                let h = 1e-6;
                let a = (w - h).max(0.0);
                let b = (w + h).min(1.0);
                if w <= 0.0 {
                    return df[0];
                }
                if w >= 1.0 {
                    return df[df.len() - 1];
                }
                (hermite(ws, f, df, b) - hermite(ws, f, df, a)) / (b - a)
            }
        }
    }
}

/// G_n(x) = (1 − x)(1 − (1 − x)^n)/n.
pub fn gm_family(n: u32) -> Result<Nonlinearity> {
    if n == 0 {
        return Err(Error::Domain("G_n needs n ≥ 1".into()));
    }
    Ok(Nonlinearity::GmFamily { n })
}

/// Offspring law generating G_n: p₁ = 1 − 1/n, p_{n+1} = 1/n.
pub fn gm_law(n: u32) -> OffspringLaw {
    let mut p = vec![0.0; n as usize + 2];
    p[1] += 1.0 - 1.0 / n as f64;
    p[n as usize + 1] += 1.0 / n as f64;
    OffspringLaw { p }
}

/// F(u) = 1 − u − Σ p_k(1 − u)^k.
#[allow(non_snake_case)]
pub fn offspring_to_F(law: &OffspringLaw) -> Result<Nonlinearity> {
    law.validate_mean_two()?;
    Ok(Nonlinearity::OffspringGenerated { law: law.clone() })
}

/// Outcome of the standard-condition checks, with numeric witnesses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScReport {
    pub f_at_0: f64,
    pub f_at_1: f64,
    pub zero_ends: bool,
    /// Smallest F over interior grid points.
    pub min_interior: f64,
    pub positive: bool,
    pub fprime_0: f64,
    pub fprime_0_is_one: bool,
    /// max over the grid of F(w) − w.
    pub max_excess_over_w: f64,
    pub below_identity: bool,
    pub fprime_1: f64,
    pub fprime_1_negative: bool,
    /// Log-log slope of (1 − F'(w))/w on [1e-4, 1e-2].
    pub curvature_slope: f64,
    pub curvature_max: f64,
    pub curvature_finite: bool,
}

impl ScReport {
    pub fn passes(&self) -> bool {
        self.zero_ends
            && self.positive
            && self.fprime_0_is_one
            && self.below_identity
            && self.fprime_1_negative
            && self.curvature_finite
    }
}

pub fn check_sc(f: &Nonlinearity) -> ScReport {
    let n = 1000;
    let f0 = f.eval(0.0);
    let f1 = f.eval(1.0);
    let mut min_interior = f64::INFINITY;
    let mut excess = f64::NEG_INFINITY;
    for i in 0..=n {
        let w = i as f64 / n as f64;
        let v = f.eval(w);
        if i > 0 && i < n {
            min_interior = min_interior.min(v);
        }
        excess = excess.max(v - w);
    }
    let d0 = f.deriv(0.0);
    let d1 = f.deriv(1.0);
    let ws: Vec<f64> = (0..=20).map(|i| 1e-4 * 100f64.powf(i as f64 / 20.0)).collect();
    let ratio: Vec<f64> = ws.iter().map(|&w| (1.0 - f.deriv(w)) / w).collect();
    let curvature_max = ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pos: Vec<(f64, f64)> = ws
        .iter()
        .zip(&ratio)
        .filter(|(_, r)| **r > 0.0)
        .map(|(w, r)| (w.ln(), r.ln()))
        .collect();
    let slope = if pos.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        crate::stats::linear_fit(&x, &y).map(|r| r.coef[1]).unwrap_or(0.0)
    } else {
        0.0
    };
    ScReport {
        f_at_0: f0,
        f_at_1: f1,
        zero_ends: f0.abs() < 1e-12 && f1.abs() < 1e-12,
        min_interior,
        positive: min_interior > 0.0,
        fprime_0: d0,
        fprime_0_is_one: (d0 - 1.0).abs() < 1e-6,
        max_excess_over_w: excess,
        below_identity: excess <= 1e-12,
        fprime_1: d1,
        fprime_1_negative: d1 < 0.0,
        curvature_slope: slope,
        curvature_max,
        curvature_finite: curvature_max.is_finite() && slope > -0.1,
    }
}

/// Smallest M ≤ 10⁶ with G_M ≤ F + 10⁻¹² on a 10⁻⁴ grid.
pub fn dominating_gm(f: &Nonlinearity) -> Result<u32> {
    let rep = check_sc(f);
    if !rep.passes() {
        return Err(Error::Precondition(format!("nonlinearity fails the standard conditions: {rep:?}")));
    }
    let grid: Vec<(f64, f64)> = (0..=10_000)
        .map(|i| {
            let w = i as f64 * 1e-4;
            (w, f.eval(w))
        })
        .collect();
    let violation = |m: u32| -> f64 {
        let g = Nonlinearity::GmFamily { n: m };
        grid.iter().map(|&(w, fw)| g.eval(w) - fw).fold(f64::NEG_INFINITY, f64::max)
    };
    const CAP: u32 = 1_000_000;
    let mut hi = 1u32;
    while violation(hi) > 1e-12 {
        if hi >= CAP {
            return Err(Error::NotFound(format!(
                "no G_M ≤ F with M ≤ {CAP}; max violation {}",
                violation(CAP)
            )));
        }
        hi = (hi * 2).min(CAP);
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(hi);
    }
    // violation(lo) > tol, violation(hi) ≤ tol
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if violation(mid) <= 1e-12 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

struct KppReaction {
    f: Nonlinearity,
    logistic: bool,
    half: Vec<f64>,
    sub: Vec<f64>,
    dt: f64,
    nsub: usize,
}

impl KppReaction {
    fn new(f: Nonlinearity) -> Self {
        KppReaction {
            logistic: matches!(f, Nonlinearity::Logistic),
            f,
            half: Vec::new(),
            sub: Vec::new(),
            dt: 0.0,
            nsub: 1,
        }
    }

    fn factors(&self, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if !self.logistic {
            return (Vec::new(), Vec::new());
        }
        let h = 0.5 * self.dt;
        let s = h / self.nsub as f64;
        (xi.iter().map(|x| (x * h).exp()).collect(), xi.iter().map(|x| (x * s).exp()).collect())
    }
}

fn clamp01(v: &mut f64) -> f64 {
    if *v < 0.0 {
        let c = -*v;
        *v = 0.0;
        c
    } else if *v > 1.0 {
        let c = *v - 1.0;
        *v = 1.0;
        c
    } else {
        0.0
    }
}

impl Reaction for KppReaction {
    fn prepare(&mut self, xi: &[f64], dt: f64, sub: usize) {
        self.dt = dt;
        self.nsub = sub;
        let (a, b) = self.factors(xi);
        self.half = a;
        self.sub = b;
    }

    fn shift(&mut self, k: usize, new_xi: &[f64], _dt: f64, _sub: usize) {
        if !self.logistic {
            return;
        }
        let (a, b) = self.factors(new_xi);
        self.half.drain(..k);
        self.half.extend(a);
        self.sub.drain(..k);
        self.sub.extend(b);
    }

    fn half_step(&mut self, u: &mut [f64], xi: &[f64], startup: bool) -> f64 {
        let mut clamp = 0.0f64;
        for v in u.iter_mut() {
            clamp = clamp.max(clamp01(v));
        }
        if self.logistic {
            let fac = if startup { &self.sub } else { &self.half };
            for (w, e) in u.iter_mut().zip(fac) {
                *w = *w * e / (1.0 + *w * (e - 1.0));
            }
            return clamp;
        }
        let tau = if startup { 0.5 * self.dt / self.nsub as f64 } else { 0.5 * self.dt };
        let n = (tau / (0.25 * self.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = tau / n as f64;
        let f = &self.f;
        for (w, &r) in u.iter_mut().zip(xi) {
            let mut y = *w;
            for _ in 0..n {
                let k1 = r * f.eval(y);
                let k2 = r * f.eval(y + 0.5 * h * k1);
                let k3 = r * f.eval(y + 0.5 * h * k2);
                let k4 = r * f.eval(y + h * k3);
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            *w = y;
            clamp = clamp.max(clamp01(w));
        }
        clamp
    }
}

/// Largest clamp tolerated in a single step before a stability error.
pub const MAX_CLAMP: f64 = 1e-6;

/// Solve the F-KPP equation from `ic` up to `opts.horizon`.
pub fn solve_kpp(
    field: &PotentialField,
    f: &Nonlinearity,
    ic: &InitialCondition,
    grid: &GridConfig,
    opts: &SolveOptions,
) -> Result<SolutionTrajectory> {
    let rep = check_sc(f);
    if !rep.passes() {
        return Err(Error::Precondition(format!("nonlinearity {} fails the standard conditions", f.name())));
    }
    ic.validate()?;
    grid.validate()?;
    if ic.height() > 1.0 {
        return Err(Error::Domain("F-KPP initial data must take values in [0, 1]".into()));
    }
    Engine::new(field, *grid, ic, KppReaction::new(f.clone()), false).run(Equation::Kpp, ic, opts, Some(MAX_CLAMP))
}

/// m^ε(t); −∞ if the level is nowhere reached.
pub fn front_kpp(traj: &SolutionTrajectory, eps: f64, t: f64) -> Result<f64> {
    traj.front(eps, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let g1 = gm_family(1).unwrap();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert!((g1.eval(x) - x * (1.0 - x)).abs() < 1e-15);
        }
        let binary = offspring_to_F(&OffspringLaw::binary()).unwrap();
        assert!((binary.eval(0.3) - 0.21).abs() < 1e-15);
        let g3 = offspring_to_F(&gm_law(3)).unwrap();
        let direct = gm_family(3).unwrap();
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((g3.eval(x) - direct.eval(x)).abs() < 1e-14);
            assert!((g3.deriv(x) - direct.deriv(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn sc_checks() {
        assert!(check_sc(&Nonlinearity::Logistic).passes());
        assert!(check_sc(&gm_family(3).unwrap()).passes());
        let bad = Nonlinearity::from_fn(|w| w * (1.0 - w) * (1.0 + w) / 1.2, |w| (1.0 + 2.0 * w - 3.0 * w * w) / 1.2, 200);
        let r = check_sc(&bad);
        assert!(!r.fprime_0_is_one && !r.passes());
    }
}
