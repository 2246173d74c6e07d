//! Branching Brownian motion in a random environment, simulated exactly by
//! thinning a rate-es Poisson clock, and the moment formulas it validates.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgen::PotentialField;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{mean_se, wilson, Estimate};
use crate::tridiag::{Boundary, ThetaStepper};

/// Offspring distribution; `p[k]` is the probability of k children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringLaw {
    pub p: Vec<f64>,
}

impl OffspringLaw {
    /// p₂ = 1.
    pub fn binary() -> Self {
        OffspringLaw { p: vec![0.0, 0.0, 1.0] }
    }

    /// p₁ = 1 (no branching at all).
    pub fn single() -> Self {
        OffspringLaw { p: vec![0.0, 1.0] }
    }

    pub fn from_pairs(pairs: &[(usize, f64)]) -> Self {
        let k = pairs.iter().map(|p| p.0).max().unwrap_or(0);
        let mut p = vec![0.0; k + 1];
        for &(i, q) in pairs {
            p[i] += q;
        }
        OffspringLaw { p }
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn m2(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum()
    }

    /// p₀ = 0, non-negative weights summing to one.
    pub fn validate(&self) -> Result<()> {
        if self.p.len() < 2 || self.p.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(Error::Law("offspring probabilities must be finite and non-negative".into()));
        }
        if self.p[0] != 0.0 {
            return Err(Error::Law("p_0 must be 0".into()));
        }
        let s: f64 = self.p.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Law(format!("probabilities sum to {s}")));
        }
        Ok(())
    }

    pub fn validate_mean_two(&self) -> Result<()> {
        self.validate()?;
        let m = self.mean();
        if (m - 2.0).abs() > 1e-12 {
            return Err(Error::Law(format!("mean offspring number is {m}, expected 2")));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut c = 0.0;
        for (k, &q) in self.p.iter().enumerate() {
            c += q;
            if u < c {
                return k;
            }
        }
        self.p.iter().rposition(|&q| q > 0.0).unwrap_or(1)
    }
}

/// Particle configuration at the end of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    pub time: f64,
    pub positions: Vec<f64>,
    /// Branching events along each particle's ancestry.
    pub lineage: Vec<u32>,
    pub cap: usize,
    pub cap_hit: bool,
}

impl ParticleSystem {
    pub fn population(&self) -> usize {
        self.positions.len()
    }
}

pub const DEFAULT_CAP: usize = 1_000_000;

/// Exact simulation up to time `t`, started from one particle at `x0`.
pub fn simulate(
    field: &PotentialField,
    law: &OffspringLaw,
    x0: f64,
    t: f64,
    cap: usize,
    seed: u64,
) -> Result<ParticleSystem> {
    if !(t > 0.0) || cap == 0 {
        return Err(Error::Domain("simulate needs T > 0 and cap ≥ 1".into()));
    }
    law.validate()?;
    let mut rng = stream_rng(seed, 0);
    Ok(run(field, law, x0, t, cap, &mut rng, None).0)
}

/// Survival probability of a Brownian bridge from a to b over time dt inside (lo, hi).
pub fn bridge_survival(a: f64, b: f64, dt: f64, lo: f64, hi: f64) -> f64 {
    if a <= lo || a >= hi || b <= lo || b >= hi {
        return 0.0;
    }
    if !lo.is_finite() && !hi.is_finite() {
        return 1.0;
    }
    if !lo.is_finite() || !hi.is_finite() {
        let d = if lo.is_finite() { (a - lo) * (b - lo) } else { (hi - a) * (hi - b) };
        return 1.0 - (-2.0 * d / dt).exp();
    }
    let w = hi - lo;
    let base = (b - a) * (b - a);
    if dt > w * w {
        // sine expansion of the killed kernel, divided by the free one
        let pi = std::f64::consts::PI;
        let mut k = 0.0;
        for n in 1..200 {
            let nf = n as f64;
            let decay = (-nf * nf * pi * pi * dt / (2.0 * w * w)).exp();
            if decay < 1e-300 {
                break;
            }
            k += (nf * pi * (a - lo) / w).sin() * (nf * pi * (b - lo) / w).sin() * decay;
        }
        let free = (-base / (2.0 * dt)).exp() / (2.0 * pi * dt).sqrt();
        return (2.0 / w * k / free).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in -5i32..=5 {
        let kw = 2.0 * k as f64 * w;
        let d1 = b - a - kw;
        let d2 = b + a - 2.0 * lo - kw;
        s += (-(d1 * d1 - base) / (2.0 * dt)).exp() - (-(d2 * d2 - base) / (2.0 * dt)).exp();
    }
    s.clamp(0.0, 1.0)
}

fn run<R: Rng>(
    field: &PotentialField,
    law: &OffspringLaw,
    x0: f64,
    t_end: f64,
    cap: usize,
    rng: &mut R,
    tube: Option<(f64, f64)>,
) -> (ParticleSystem, usize) {
    let es = field.es();
    let clock = Exp::new(es).ok();
    let mut stack: Vec<(f64, f64, u32)> = vec![(x0, 0.0, 0)];
    let mut done_x = Vec::new();
    let mut done_l = Vec::new();
    let mut killed = 0usize;
    let mut cap_hit = false;
    let mut stop_time = t_end;
    'outer: while let Some((mut x, mut s, mut gen)) = stack.pop() {
        loop {
            let tau = match &clock {
                Some(c) => c.sample(rng),
                None => f64::INFINITY,
            };
            let step = tau.min(t_end - s);
            let z: f64 = StandardNormal.sample(rng);
            let y = x + step.sqrt() * z;
            if let Some((lo, hi)) = tube {
                let p = bridge_survival(x, y, step, lo, hi);
                if p < 1.0 && rng.random::<f64>() >= p {
                    killed += 1;
                    continue 'outer;
                }
            }
            x = y;
            if s + tau >= t_end {
                done_x.push(x);
                done_l.push(gen);
                continue 'outer;
            }
            s += tau;
            let xi = field.evaluate(x);
            if rng.random::<f64>() * es < xi {
                let k = law.sample(rng);
                gen += 1;
                for _ in 1..k {
                    stack.push((x, s, gen));
                }
                if done_x.len() + stack.len() + 1 + killed > cap && tube.is_none() {
                    cap_hit = true;
                    stop_time = s;
                    break 'outer;
                }
            }
        }
    }
    (
        ParticleSystem {
            time: stop_time,
            positions: done_x,
            lineage: done_l,
            cap,
            cap_hit,
        },
        killed,
    )
}

/// N^≤(t, y).
pub fn count_leq(psys: &ParticleSystem, y: f64) -> Result<usize> {
    if psys.cap_hit {
        return Err(Error::CapHit);
    }
    Ok(psys.positions.iter().filter(|&&p| p <= y).count())
}

/// One row per replica.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub population: usize,
    pub count_leq: usize,
    pub cap_hit: bool,
}

/// Run `n_reps` independent replicas from x and count particles ≤ y at time t.
#[allow(clippy::too_many_arguments)]
pub fn replicas(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    y: f64,
    n_reps: usize,
    cap: usize,
    seed: u64,
) -> Result<Vec<ReplicaSummary>> {
    if !(t > 0.0) || cap == 0 {
        return Err(Error::Domain("replicas need T > 0 and cap ≥ 1".into()));
    }
    law.validate()?;
    let key = derive_seed(seed, "bbmre-replica", 0);
    Ok((0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(key, r as u64);
            let (ps, _) = run(field, law, x, t, cap, &mut rng, None);
            ReplicaSummary {
                replica: r,
                population: ps.population(),
                count_leq: if ps.cap_hit { 0 } else { ps.positions.iter().filter(|&&p| p <= y).count() },
                cap_hit: ps.cap_hit,
            }
        })
        .collect())
}

pub fn replicas_csv(rows: &[ReplicaSummary]) -> String {
    let mut s = String::from("replica,population,count_leq,cap_hit\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.replica, r.population, r.count_leq, r.cap_hit));
    }
    s
}

fn usable(rows: &[ReplicaSummary]) -> Result<Vec<&ReplicaSummary>> {
    let hit = rows.iter().filter(|r| r.cap_hit).count();
    if hit as f64 > 0.01 * rows.len() as f64 {
        return Err(Error::Reliability(format!("{hit} of {} replicas hit the population cap", rows.len())));
    }
    Ok(rows.iter().filter(|r| !r.cap_hit).collect())
}

/// P_x(N^≤(t, 0) ≥ 1) with a Wilson-interval standard error.
pub fn estimate_w(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    n_reps: usize,
    seed: u64,
) -> Result<Estimate> {
    let rows = replicas(field, law, x, t, 0.0, n_reps, DEFAULT_CAP, seed)?;
    let ok = usable(&rows)?;
    Ok(wilson(ok.iter().filter(|r| r.count_leq >= 1).count(), ok.len()))
}

/// E_x[N^≤(t, 0)].
pub fn estimate_mean_count(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    n_reps: usize,
    seed: u64,
) -> Result<Estimate> {
    let rows = replicas(field, law, x, t, 0.0, n_reps, DEFAULT_CAP, seed)?;
    let ok = usable(&rows)?;
    let c: Vec<f64> = ok.iter().map(|r| r.count_leq as f64).collect();
    Ok(mean_se(&c))
}

/// Both estimators from one set of replicas.
pub fn estimate_both(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    n_reps: usize,
    seed: u64,
) -> Result<(Estimate, Estimate)> {
    let (_, w, m) = replica_estimates(field, law, x, t, n_reps, DEFAULT_CAP, seed)?;
    Ok((w, m))
}

/// Replica summaries with the survival and mean-count estimates built from them.
#[allow(clippy::too_many_arguments)]
pub fn replica_estimates(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    n_reps: usize,
    cap: usize,
    seed: u64,
) -> Result<(Vec<ReplicaSummary>, Estimate, Estimate)> {
    let rows = replicas(field, law, x, t, 0.0, n_reps, cap, seed)?;
    let ok = usable(&rows)?;
    let c: Vec<f64> = ok.iter().map(|r| r.count_leq as f64).collect();
    let w = wilson(ok.iter().filter(|r| r.count_leq >= 1).count(), ok.len());
    let m = mean_se(&c);
    Ok((rows, w, m))
}

/// Monte Carlo and Feynman–Kac moments of the number of particles whose
/// ancestral path stayed in [lo, hi].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeMoments {
    pub mc_first: Estimate,
    pub mc_second: Estimate,
    pub fk1_value: f64,
    pub fk2_value: f64,
    pub quadrature_residual: f64,
}

/// Killed PAM v_t = ½v_xx + ξv on (lo, hi), zero at both ends.
pub struct KilledPam {
    lo: f64,
    dx: f64,
    xi: Vec<f64>,
    half: Vec<f64>,
    sub: Vec<f64>,
    cn: ThetaStepper,
    be: ThetaStepper,
    dt: f64,
    substeps: usize,
}

impl KilledPam {
    pub fn new(field: &PotentialField, lo: f64, hi: f64, dx: f64, dt: f64) -> Self {
        let n_cells = ((hi - lo) / dx).round().max(2.0) as usize;
        let dx = (hi - lo) / n_cells as f64;
        let n = n_cells - 1;
        let xi = field.sample_with(n, |j| lo + (j + 1) as f64 * dx);
        let c = 0.5 / (dx * dx);
        let substeps = 4;
        let half: Vec<f64> = xi.iter().map(|x| (0.5 * dt * x).exp()).collect();
        let sub: Vec<f64> = xi.iter().map(|x| (0.5 * dt / substeps as f64 * x).exp()).collect();
        KilledPam {
            lo,
            dx,
            cn: ThetaStepper::new(n, c, -2.0 * c, c, Boundary::Dirichlet, Boundary::Dirichlet, 0.5, dt),
            be: ThetaStepper::new(n, c, -2.0 * c, c, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, dt / substeps as f64),
            xi,
            half,
            sub,
            dt,
            substeps,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.xi.len()).map(|j| self.lo + (j + 1) as f64 * self.dx).collect()
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Evolve interior values `u` and return copies at the requested step counts (ascending).
    pub fn evolve(&self, mut u: Vec<f64>, out_steps: &[usize]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(out_steps.len());
        let mut scratch = Vec::new();
        let last = out_steps.iter().copied().max().unwrap_or(0);
        let mut k = 0;
        while k < out_steps.len() && out_steps[k] == 0 {
            out.push(u.clone());
            k += 1;
        }
        for n in 1..=last {
            if n == 1 {
                for _ in 0..self.substeps {
                    mul(&mut u, &self.sub);
                    self.be.step(&mut u, &mut scratch, (0.0, 0.0), (0.0, 0.0));
                    mul(&mut u, &self.sub);
                }
            } else {
                mul(&mut u, &self.half);
                self.cn.step(&mut u, &mut scratch, (0.0, 0.0), (0.0, 0.0));
                mul(&mut u, &self.half);
            }
            while k < out_steps.len() && out_steps[k] == n {
                out.push(u.clone());
                k += 1;
            }
        }
        out
    }

    /// Linear interpolation of interior values at x (zero at the walls).
    pub fn interpolate(&self, u: &[f64], x: f64) -> f64 {
        let p = (x - self.lo) / self.dx;
        if p <= 0.0 || p >= (u.len() + 1) as f64 {
            return 0.0;
        }
        let j = p.floor() as usize;
        let w = p - j as f64;
        let at = |i: usize| if i == 0 || i > u.len() { 0.0 } else { u[i - 1] };
        (1.0 - w) * at(j) + w * at(j + 1)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

fn mul(u: &mut [f64], f: &[f64]) {
    for (v, m) in u.iter_mut().zip(f) {
        *v *= m;
    }
}

/// Resolution of the killed-PAM solves behind `tube_moments`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubeGrid {
    pub dx: f64,
    pub dt: f64,
    /// Simpson intervals in s (even).
    pub n_quad: usize,
    /// Half-width used in place of an infinite barrier.
    pub far: f64,
}

impl Default for TubeGrid {
    fn default() -> Self {
        TubeGrid {
            dx: 0.01,
            dt: 0.0025,
            n_quad: 40,
            far: 25.0,
        }
    }
}

fn simpson(h: f64, f: &[f64]) -> f64 {
    let n = f.len() - 1;
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0
}

/// First moment E_x[e^{∫ξ}; tube] and second moment via the many-to-two formula.
pub fn tube_fk(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    lo: f64,
    hi: f64,
    grid: &TubeGrid,
) -> Result<(f64, f64, f64)> {
    let (lo_d, hi_d) = (lo.max(x - grid.far), hi.min(x + grid.far));
    let q = grid.n_quad.max(2) & !1;
    let steps_total = (t / grid.dt).round() as usize;
    if !steps_total.is_multiple_of(q) {
        return Err(Error::Config(format!("t/dt = {steps_total} must be a multiple of n_quad = {q}")));
    }
    let solver = KilledPam::new(field, lo_d, hi_d, grid.dx, t / steps_total as f64);
    let per = steps_total / q;
    // v(r, ·) at r = t − s_i, i.e. r on the quadrature grid
    let r_steps: Vec<usize> = (0..=q).map(|i| i * per).collect();
    let ones = vec![1.0; solver.nodes().len()];
    let v = solver.evolve(ones, &r_steps);
    let fk1 = solver.interpolate(&v[q], x);
    let factor = law.m2() - law.mean();
    // integrand at s_i = i·t/q: E_x[e^{∫₀^s ξ} ξ(B_s) v(t−s, B_s)²; tube]
    let integrand: Vec<f64> = (0..=q)
        .into_par_iter()
        .map(|i| {
            let vr = &v[q - i];
            let g: Vec<f64> = vr.iter().zip(solver.xi()).map(|(a, xi)| xi * a * a).collect();
            let out = solver.evolve(g, &[i * per]);
            solver.interpolate(&out[0], x)
        })
        .collect();
    let h = t / q as f64;
    let fine = simpson(h, &integrand);
    let coarse_pts: Vec<f64> = integrand.iter().step_by(2).copied().collect();
    let coarse = if coarse_pts.len() >= 3 && (coarse_pts.len() - 1).is_multiple_of(2) {
        simpson(2.0 * h, &coarse_pts)
    } else {
        0.5 * h * (integrand.iter().sum::<f64>() * 2.0 - integrand[0] - integrand[q])
    };
    let residual = if fine != 0.0 { ((fine - coarse) / fine).abs() / 15.0 } else { 0.0 };
    Ok((fk1, fk1 + factor * fine, residual))
}

/// MC moments of the in-tube count against the many-to-one/two formulas.
#[allow(clippy::too_many_arguments)]
pub fn tube_moments(
    field: &PotentialField,
    law: &OffspringLaw,
    x: f64,
    t: f64,
    barrier_lo: f64,
    barrier_hi: f64,
    n_reps: usize,
    seed: u64,
    grid: &TubeGrid,
) -> Result<TubeMoments> {
    if !(barrier_lo < x && x < barrier_hi) {
        return Err(Error::Domain("barriers must bracket the start point".into()));
    }
    law.validate()?;
    let key = derive_seed(seed, "bbmre-tube", 0);
    let counts: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(key, r as u64);
            let (ps, _) = run(field, law, x, t, usize::MAX, &mut rng, Some((barrier_lo, barrier_hi)));
            ps.population() as f64
        })
        .collect();
    let sq: Vec<f64> = counts.iter().map(|c| c * c).collect();
    let (fk1, fk2, residual) = tube_fk(field, law, x, t, barrier_lo, barrier_hi, grid)?;
    if residual > 0.01 {
        return Err(Error::Refinement(residual));
    }
    Ok(TubeMoments {
        mc_first: mean_se(&counts),
        mc_second: mean_se(&sq),
        fk1_value: fk1,
        fk2_value: fk2,
        quadrature_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::PotentialSpec;

    #[test]
    fn law_validation() {
        assert!(OffspringLaw::binary().validate_mean_two().is_ok());
        assert!(OffspringLaw::single().validate().is_ok());
        assert!(OffspringLaw::single().validate_mean_two().is_err());
        assert!(OffspringLaw { p: vec![0.1, 0.0, 0.9] }.validate().is_err());
        let l = OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)]);
        assert!((l.mean() - 2.0).abs() < 1e-15 && (l.m2() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn bridge_survival_limits() {
        assert_eq!(bridge_survival(0.0, 0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY), 1.0);
        let one_sided = bridge_survival(0.5, 0.5, 1.0, 0.0, f64::INFINITY);
        let two_sided = bridge_survival(0.5, 0.5, 1.0, 0.0, 1e6);
        assert!((one_sided - two_sided).abs() < 1e-12);
        assert!(bridge_survival(0.0, 0.0, 1e-6, -1.0, 1.0) > 1.0 - 1e-12);
        assert!(bridge_survival(0.0, 0.0, 100.0, -1.0, 1.0) < 1e-3);
    }

    #[test]
    fn killed_pam_homogeneous_first_moment() {
        // ξ ≡ 1 on (−1, 1): e^t times the sine series of the survival probability.
        let f = PotentialField::new(PotentialSpec::constant(1.0)).unwrap();
        let s = KilledPam::new(&f, -1.0, 1.0, 0.01, 0.0025);
        let out = s.evolve(vec![1.0; s.nodes().len()], &[400]);
        let got = s.interpolate(&out[0], 0.0);
        let mut want = 0.0;
        for k in 0..50 {
            let m = (2 * k + 1) as f64;
            let lam = (m * std::f64::consts::PI / 2.0).powi(2) / 2.0;
            want += 4.0 / (m * std::f64::consts::PI) * (-lam).exp() * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
        want *= 1f64.exp();
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}
