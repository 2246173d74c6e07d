//! Annealed limit objects: L(η) and its derivatives, η̄(v), L*(1/v), Λ(v),
//! v₀, v_c and the variance constants σ_v², σ̃²_{v₀}.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgen::{PotentialField, PotentialSpec};
use crate::error::{Error, Result};
use crate::hitting::{self, BvpConfig, TiltChain, UnitChain, ETA_MAX, ETA_MIN};
use crate::rng::derive_seed;
pub use crate::stats::Estimate;
use crate::stats::mean_se;

pub use crate::hitting::TiltSolution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub eta_min: f64,
    pub eta_max: f64,
    pub n_eta: usize,
    pub n_env: usize,
    pub n_units: usize,
    pub batches_per_env: usize,
    pub n_v: usize,
    /// Velocity interval; defaults to [0.5·v₀, 1.5·v₀] clipped to where η̄ exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_range: Option<[f64; 2]>,
    /// Covariance lag cutoff; defaults to ⌈4·dependence range⌉.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag_cutoff: Option<usize>,
    /// Spacing δ of the points −δ, −2δ, −4δ used to extrapolate to η = 0⁻.
    pub zero_delta: f64,
    pub bvp: BvpConfig,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            eta_min: ETA_MIN,
            eta_max: ETA_MAX,
            n_eta: 400,
            n_env: 8,
            n_units: 2000,
            batches_per_env: 10,
            n_v: 41,
            v_range: None,
            lag_cutoff: None,
            zero_delta: 1e-3,
            bvp: BvpConfig::default(),
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        self.bvp.validate()?;
        if !(self.eta_min >= ETA_MIN && self.eta_max <= ETA_MAX && self.eta_min < self.eta_max) {
            return Err(Error::Config(format!(
                "eta grid [{}, {}] must lie inside [{ETA_MIN}, {ETA_MAX}]",
                self.eta_min, self.eta_max
            )));
        }
        if self.n_eta < 8 || self.n_env == 0 || self.n_units == 0 || self.n_v < 3 {
            return Err(Error::Config("profile needs n_eta >= 8, n_v >= 3 and positive n_env, n_units".into()));
        }
        if self.batches_per_env == 0 || self.batches_per_env > self.n_units {
            return Err(Error::Config("batches_per_env must lie in 1..=n_units".into()));
        }
        if !(self.zero_delta > 0.0 && 4.0 * self.zero_delta < 1.0) {
            return Err(Error::Config("zero_delta must lie in (0, 0.25)".into()));
        }
        Ok(())
    }

    /// The log-spaced η grid, ascending from eta_min to eta_max.
    pub fn eta_grid(&self) -> Vec<f64> {
        let a = (-self.eta_min).ln();
        let b = (-self.eta_max).ln();
        let n = self.n_eta;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.eta_max
                } else if i == 0 {
                    self.eta_min
                } else {
                    -(a + (b - a) * i as f64 / (n - 1) as f64).exp()
                }
            })
            .collect()
    }
}

/// Cubic Hermite interpolation on an ascending grid.
pub fn hermite(xs: &[f64], ys: &[f64], ds: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => return ys[i],
        Err(0) => 0,
        Err(i) if i >= n => n - 2,
        Err(i) => i - 1,
    };
    let h = xs[i + 1] - xs[i];
    let t = (x - xs[i]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ys[i] + h10 * h * ds[i] + h01 * ys[i + 1] + h11 * h * ds[i + 1]
}

fn env_field(spec: &PotentialSpec, e: usize) -> Result<PotentialField> {
    PotentialField::new(spec.with_seed(derive_seed(spec.seed, "lyapunov-env", e as u64)))
}

/// Batch means of `[L, L', L'']` over units for one env and a set of η.
fn env_batches(
    field: &PotentialField,
    etas: &[f64],
    n_units: usize,
    batches: usize,
    bvp: &BvpConfig,
) -> Result<Vec<Vec<[f64; 3]>>> {
    let chain = UnitChain::new(field, 1, n_units, bvp);
    let per = n_units / batches;
    etas.iter()
        .map(|&eta| {
            let v = chain.logs_with_derivs(eta, bvp.eta_fd_step)?;
            Ok((0..batches)
                .map(|b| {
                    let hi = if b + 1 == batches { n_units } else { (b + 1) * per };
                    let sl = &v[b * per..hi];
                    let k = sl.len() as f64;
                    let mut s = [0.0; 3];
                    for u in sl {
                        for q in 0..3 {
                            s[q] += u[q];
                        }
                    }
                    [s[0] / k, s[1] / k, s[2] / k]
                })
                .collect())
        })
        .collect()
}

/// L(η) = E[L_1(η)] as an average over units and environments.
pub fn expected_log_mgf(
    spec: &PotentialSpec,
    eta: f64,
    n_env: usize,
    n_units: usize,
    bvp: &BvpConfig,
) -> Result<Estimate> {
    let eta = hitting::clamp_eta(eta)?;
    let batches = 10.min(n_units);
    let per_env: Vec<Vec<Vec<[f64; 3]>>> = (0..n_env)
        .into_par_iter()
        .map(|e| env_batches(&env_field(spec, e)?, &[eta], n_units, batches, bvp))
        .collect::<Result<_>>()?;
    let all: Vec<f64> = per_env.iter().flat_map(|v| v[0].iter().map(|b| b[0])).collect();
    let mut est = mean_se(&all);
    if spec.is_constant() {
        est.se = 0.0;
    }
    Ok(est)
}

/// Everything derived from the annealed log-mgf for one potential specification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovProfile {
    pub spec: PotentialSpec,
    pub config: ProfileConfig,
    pub es: f64,
    /// Ascending η grid in [eta_min, eta_max].
    pub eta_grid: Vec<f64>,
    pub l_table: Vec<f64>,
    pub l_se: Vec<f64>,
    pub dl_table: Vec<f64>,
    pub dl_se: Vec<f64>,
    pub d2l_table: Vec<f64>,
    pub d2l_se: Vec<f64>,
    /// L(0⁻) and L'(0⁻) extrapolated from −δ, −2δ, −4δ.
    pub l0: Estimate,
    pub dl0: Estimate,
    /// Local slope d ln L'/d ln|η| near 0; ≤ −0.25 is read as a divergent L'(0⁻).
    pub dl0_log_slope: f64,
    pub vc: f64,
    pub v0: f64,
    pub v0_variational: f64,
    pub v0_variational_at_boundary: bool,
    pub v_grid: Vec<f64>,
    pub eta_bar_table: Vec<f64>,
    pub legendre_table: Vec<f64>,
    pub lambda_table: Vec<f64>,
    pub sigma2_table: Vec<Estimate>,
    pub sigma2_v0: Option<Estimate>,
    pub sigma_tilde2: Option<Estimate>,
    pub lag_cutoff: usize,
    pub n_env: usize,
    pub n_units: usize,
}

impl LyapunovProfile {
    pub fn build(spec: &PotentialSpec, cfg: &ProfileConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let eta_grid = cfg.eta_grid();
        let d = cfg.zero_delta;
        let mut etas = eta_grid.clone();
        etas.extend([-4.0 * d, -2.0 * d, -d]);
        let (n_env, n_units, batches) = if spec.is_constant() {
            (1, 1, 1)
        } else {
            (cfg.n_env, cfg.n_units, cfg.batches_per_env)
        };
        let per_env: Vec<Vec<Vec<[f64; 3]>>> = (0..n_env)
            .into_par_iter()
            .map(|e| env_batches(&env_field(spec, e)?, &etas, n_units, batches, &cfg.bvp))
            .collect::<Result<_>>()?;
        let ne = etas.len();
        let mut table = vec![[Estimate { value: 0.0, se: 0.0 }; 3]; ne];
        for (k, row) in table.iter_mut().enumerate() {
            for q in 0..3 {
                let b: Vec<f64> = per_env.iter().flat_map(|env| env[k].iter().map(|x| x[q])).collect();
                let mut est = mean_se(&b);
                if spec.is_constant() || !est.se.is_finite() {
                    est.se = if spec.is_constant() { 0.0 } else { est.se };
                }
                row[q] = est;
            }
        }
        let n = eta_grid.len();
        let col = |q: usize, f: fn(&Estimate) -> f64| -> Vec<f64> { table[..n].iter().map(|r| f(&r[q])).collect() };
        let l_table = col(0, |e| e.value);
        let l_se = col(0, |e| e.se);
        let dl_table = col(1, |e| e.value);
        let dl_se = col(1, |e| e.se);
        let d2l_table = col(2, |e| e.value);
        let d2l_se = col(2, |e| e.se);

        // extrapolation to 0⁻ from f(−δ), f(−2δ), f(−4δ)
        let z = |q: usize| -> Estimate {
            let f4 = table[n][q];
            let f2 = table[n + 1][q];
            let f1 = table[n + 2][q];
            Estimate {
                value: (8.0 * f1.value - 6.0 * f2.value + f4.value) / 3.0,
                se: (64.0 * f1.se * f1.se + 36.0 * f2.se * f2.se + f4.se * f4.se).sqrt() / 3.0,
            }
        };
        let l0 = z(0);
        let dl0 = z(1);
        let dl_slope = (table[n + 2][1].value / table[n][1].value).ln() / (0.25f64).ln();
        let vc = if dl_slope <= -0.25 || !(dl0.value > 0.0) {
            0.0
        } else {
            1.0 / dl0.value
        };

        let mut p = LyapunovProfile {
            spec: spec.clone(),
            config: cfg.clone(),
            es: spec.es,
            eta_grid,
            l_table,
            l_se,
            dl_table,
            dl_se,
            d2l_table,
            d2l_se,
            l0,
            dl0,
            dl0_log_slope: dl_slope,
            vc,
            v0: f64::NAN,
            v0_variational: f64::NAN,
            v0_variational_at_boundary: false,
            v_grid: Vec::new(),
            eta_bar_table: Vec::new(),
            legendre_table: Vec::new(),
            lambda_table: Vec::new(),
            sigma2_table: Vec::new(),
            sigma2_v0: None,
            sigma_tilde2: None,
            lag_cutoff: cfg
                .lag_cutoff
                .unwrap_or_else(|| (4.0 * spec.dependence_range()).ceil().max(1.0) as usize),
            n_env,
            n_units,
        };
        p.v0 = p.compute_v0()?;
        let (vv, boundary) = p.compute_v0_variational();
        p.v0_variational = vv;
        p.v0_variational_at_boundary = boundary;

        let (lo, hi) = match cfg.v_range {
            Some([a, b]) => (a, b),
            None => (0.5 * p.v0, 1.5 * p.v0),
        };
        let lo = lo.max(p.v_edge() * (1.0 + 1e-9));
        let hi = hi.min(p.v_top() * (1.0 - 1e-9));
        if hi > lo {
            p.v_grid = (0..cfg.n_v)
                .map(|i| lo + (hi - lo) * i as f64 / (cfg.n_v - 1) as f64)
                .collect();
        }
        for &v in &p.v_grid.clone() {
            p.eta_bar_table.push(p.eta_bar(v)?);
            p.legendre_table.push(p.legendre_star(v)?);
            p.lambda_table.push(p.lyapunov_exponent(v));
        }
        let etas_v: Vec<f64> = p.eta_bar_table.clone();
        let v_grid = p.v_grid.clone();
        p.sigma2_table = sigma_v2_many(spec, &v_grid, &etas_v, n_units, p.lag_cutoff, n_env, &cfg.bvp)?;
        if p.vel() && p.v0 > p.v_edge() {
            let eb = p.eta_bar(p.v0)?;
            let s = sigma_v2_many(spec, &[p.v0], &[eb], n_units, p.lag_cutoff, n_env, &cfg.bvp)?[0];
            p.sigma2_v0 = Some(s);
            let l = p.l_at(eb);
            if l.abs() >= 1e-6 {
                let k = p.v0 / (l * l);
                p.sigma_tilde2 = Some(Estimate {
                    value: s.value * k,
                    se: s.se * k,
                });
            }
        }
        Ok(p)
    }

    /// Smallest velocity with η̄ inside the grid: 1/L'(eta_max).
    pub fn v_edge(&self) -> f64 {
        1.0 / *self.dl_table.last().unwrap()
    }

    /// Largest velocity with η̄ inside the grid: 1/L'(eta_min).
    pub fn v_top(&self) -> f64 {
        1.0 / self.dl_table[0]
    }

    /// Condition v₀ > v_c.
    pub fn vel(&self) -> bool {
        self.v0 > self.vc
    }

    pub fn l_at(&self, eta: f64) -> f64 {
        hermite(&self.eta_grid, &self.l_table, &self.dl_table, eta)
    }

    pub fn dl_at(&self, eta: f64) -> f64 {
        hermite(&self.eta_grid, &self.dl_table, &self.d2l_table, eta)
    }

    /// η̄(v): root of L'(η) = 1/v.
    pub fn eta_bar(&self, v: f64) -> Result<f64> {
        if !(v > self.vc) {
            return Err(Error::NoRoot(format!(
                "below critical velocity: v = {v} <= v_c = {}",
                self.vc
            )));
        }
        let target = 1.0 / v;
        let n = self.eta_grid.len();
        if target > self.dl_table[n - 1] {
            return Err(Error::NoRoot(format!(
                "below critical velocity: v = {v} needs eta above the grid end {}",
                self.eta_grid[n - 1]
            )));
        }
        if target < self.dl_table[0] {
            return Err(Error::Range(format!("v = {v} needs eta below {}", self.eta_grid[0])));
        }
        // segment by table, then bisection on the interpolant
        let mut i = self.dl_table.partition_point(|&d| d < target);
        if i == 0 {
            i = 1;
        }
        let (mut lo, mut hi) = (self.eta_grid[i - 1], self.eta_grid[i.min(n - 1)]);
        if self.dl_table[i.min(n - 1)] == target {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.dl_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// L*(1/v) = η̄/v − L(η̄).
    pub fn legendre_star(&self, v: f64) -> Result<f64> {
        let e = self.eta_bar(v)?;
        Ok(e / v - self.l_at(e))
    }

    /// sup over the η grid of η/v − L(η).
    pub fn legendre_grid_sup(&self, v: f64) -> f64 {
        self.eta_grid
            .iter()
            .zip(&self.l_table)
            .map(|(e, l)| e / v - l)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Λ(v); linear segment es + v·L(0⁻) below the grid edge velocity.
    pub fn lyapunov_exponent(&self, v: f64) -> f64 {
        if v < self.v_edge() || v <= self.vc {
            self.es + v * self.l0.value
        } else {
            match self.legendre_star(v) {
                Ok(ls) => self.es - v * ls,
                Err(_) => {
                    // beyond the grid top: continue with the tangent at eta_min
                    let e = self.eta_grid[0];
                    self.es - e + v * self.l_table[0]
                }
            }
        }
    }

    /// Λ'(v) = L(η̄(v)) above the edge, L(0⁻) below.
    pub fn lyapunov_slope(&self, v: f64) -> f64 {
        if v < self.v_edge() || v <= self.vc {
            self.l0.value
        } else {
            self.eta_bar(v).map(|e| self.l_at(e)).unwrap_or(self.l_table[0])
        }
    }

    fn compute_v0(&self) -> Result<f64> {
        let mut hi = (2.0 * self.es).sqrt() * 1.05;
        let mut tries = 0;
        while self.lyapunov_exponent(hi) >= 0.0 {
            hi *= 1.5;
            tries += 1;
            if tries > 10 || hi > self.v_top() * 4.0 {
                return Err(Error::Range(format!(
                    "Lambda does not change sign up to v = {hi}; extend v_max"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.lyapunov_exponent(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// inf over η of (η − es)/L(η); flags a minimum at the η → 0⁻ end.
    fn compute_v0_variational(&self) -> (f64, bool) {
        let f = |eta: f64| (eta - self.es) / self.l_at(eta);
        let n = self.eta_grid.len();
        let vals: Vec<f64> = self.eta_grid.iter().zip(&self.l_table).map(|(e, l)| (e - self.es) / l).collect();
        let mut i = 0;
        for k in 1..n {
            if vals[k] < vals[i] {
                i = k;
            }
        }
        let at_zero = if self.l0.value < 0.0 {
            -self.es / self.l0.value
        } else {
            f64::INFINITY
        };
        if i == n - 1 {
            return (at_zero.min(vals[i]), true);
        }
        let mut a = self.eta_grid[i.saturating_sub(1)];
        let mut b = self.eta_grid[(i + 1).min(n - 1)];
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        for _ in 0..200 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        let v = f(0.5 * (a + b)).min(vals[i]);
        (v, false)
    }

    /// W at velocity v from a tilt: √x·(empirical Legendre − L*(1/v)).
    pub fn legendre_process(&self, tilt: &TiltSolution) -> Result<Option<f64>> {
        if !tilt.found {
            return Ok(None);
        }
        Ok(Some(tilt.x.sqrt() * (tilt.legendre() - self.legendre_star(tilt.v)?)))
    }

    /// Relative disagreement of the two v₀ routes.
    pub fn v0_disagreement(&self) -> f64 {
        (self.v0 - self.v0_variational).abs() / self.v0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV of the η tables.
    pub fn eta_csv(&self) -> String {
        let mut s = String::from("eta,L,L_se,dL,dL_se,d2L,d2L_se\n");
        for i in 0..self.eta_grid.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.eta_grid[i],
                self.l_table[i],
                self.l_se[i],
                self.dl_table[i],
                self.dl_se[i],
                self.d2l_table[i],
                self.d2l_se[i]
            ));
        }
        s
    }

    /// CSV of the velocity tables.
    pub fn v_csv(&self) -> String {
        let mut s = String::from("v,eta_bar,legendre,lambda,sigma2,sigma2_se\n");
        for i in 0..self.v_grid.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.v_grid[i],
                self.eta_bar_table[i],
                self.legendre_table[i],
                self.lambda_table[i],
                self.sigma2_table[i].value,
                self.sigma2_table[i].se
            ));
        }
        s
    }
}

/// Long-run variance of V_i = η̄/v − L_i(η̄) for several (v, η̄) pairs.
pub fn sigma_v2_many(
    spec: &PotentialSpec,
    vs: &[f64],
    eta_bars: &[f64],
    n_units: usize,
    lag_cutoff: usize,
    n_env: usize,
    bvp: &BvpConfig,
) -> Result<Vec<Estimate>> {
    if spec.is_constant() {
        return Ok(vs.iter().map(|_| Estimate { value: 0.0, se: 0.0 }).collect());
    }
    if lag_cutoff + 2 > n_units {
        return Err(Error::Config(format!(
            "lag_cutoff {lag_cutoff} too large for {n_units} units"
        )));
    }
    // per env: per v, the autocovariances of L_i(η̄) (V_i differs by a constant)
    let per_env: Vec<Vec<(f64, Vec<f64>)>> = (0..n_env)
        .into_par_iter()
        .map(|e| {
            let f = env_field(spec, e)?;
            let chain = UnitChain::new(&f, 1, n_units, bvp);
            eta_bars
                .iter()
                .map(|&eb| {
                    let l = chain.logs(eb)?;
                    let sum: f64 = l.iter().sum();
                    Ok((sum, l))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(vs.len());
    for k in 0..vs.len() {
        let total: f64 = per_env.iter().map(|env| env[k].0).sum();
        let mean = total / (n_env * n_units) as f64;
        let ests: Vec<f64> = per_env
            .iter()
            .map(|env| {
                let l = &env[k].1;
                let n = l.len();
                let dev: Vec<f64> = l.iter().map(|x| x - mean).collect();
                let gamma = |lag: usize| -> f64 {
                    dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n - lag) as f64
                };
                gamma(0) + 2.0 * (1..=lag_cutoff).map(gamma).sum::<f64>()
            })
            .collect();
        let est = mean_se(&ests);
        if est.se.is_finite() && est.value < -3.0 * est.se {
            return Err(Error::Inconsistent(format!(
                "sigma_v^2 = {} below -3 SE ({}) at v = {}",
                est.value, est.se, vs[k]
            )));
        }
        out.push(est);
    }
    Ok(out)
}

/// σ_v² at one velocity given η̄(v).
pub fn sigma_v2(
    spec: &PotentialSpec,
    v: f64,
    eta_bar: f64,
    n_units: usize,
    lag_cutoff: usize,
    n_env: usize,
    bvp: &BvpConfig,
) -> Result<Estimate> {
    Ok(sigma_v2_many(spec, &[v], &[eta_bar], n_units, lag_cutoff, n_env, bvp)?[0])
}

/// σ̃² = σ²_{v₀}·v₀ / L(η̄(v₀))².
pub fn sigma_tilde2(profile: &LyapunovProfile) -> Result<Estimate> {
    let s = profile
        .sigma2_v0
        .ok_or_else(|| Error::Degenerate("sigma^2 at v0 unavailable (v0 <= v_c)".into()))?;
    let l = profile.l_at(profile.eta_bar(profile.v0)?);
    if l.abs() < 1e-6 {
        return Err(Error::Degenerate(format!("|L(eta_bar(v0))| = {} < 1e-6", l.abs())));
    }
    let k = profile.v0 / (l * l);
    Ok(Estimate {
        value: s.value * k,
        se: s.se * k,
    })
}

/// η_x^ζ(v).
pub fn empirical_tilt(field: &PotentialField, x: f64, v: f64, cfg: &BvpConfig) -> Result<TiltSolution> {
    hitting::empirical_tilt(field, x, v, cfg)
}

/// W_x^v(1); `None` when the tilt does not exist.
pub fn empirical_legendre_process(
    field: &PotentialField,
    v: f64,
    x: f64,
    profile: &LyapunovProfile,
) -> Result<Option<f64>> {
    if !(v > profile.vc) {
        return Err(Error::NoRoot(format!("below critical velocity: v = {v}")));
    }
    let t = empirical_tilt(field, x, v, &profile.config.bvp)?;
    profile.legendre_process(&t)
}

/// Tilts at many integer x for one field, sharing a chain.
pub fn empirical_tilts(field: &PotentialField, xs: &[usize], v: f64, cfg: &BvpConfig) -> Result<Vec<TiltSolution>> {
    let x_max = xs.iter().copied().max().unwrap_or(1);
    let chain = TiltChain::new(field, x_max, cfg);
    xs.iter().map(|&x| chain.tilt(x, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_is_exact_on_cubics() {
        let xs = [0.0, 0.5, 1.5, 2.0];
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let ds: Vec<f64> = xs.iter().map(|&x| df(x)).collect();
        for &x in &[0.1, 0.7, 1.9] {
            assert!((hermite(&xs, &ys, &ds, x) - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_profile_closed_forms() {
        let cfg = ProfileConfig {
            n_eta: 200,
            ..ProfileConfig::default()
        };
        let p = LyapunovProfile::build(&PotentialSpec::constant(1.0), &cfg).unwrap();
        assert!((p.v0 - 2f64.sqrt()).abs() < 1e-6, "{}", p.v0);
        assert_eq!(p.vc, 0.0);
        assert!((p.eta_bar(2.0).unwrap() + 2.0).abs() < 1e-6);
        assert!((p.legendre_star(2.0).unwrap() - 1.0).abs() < 1e-6);
        assert!((p.lyapunov_exponent(1.0) - 0.5).abs() < 1e-6);
        assert_eq!(p.lyapunov_exponent(0.0), 1.0);
        assert!((p.v0_variational - 2f64.sqrt()).abs() < 1e-6);
        assert_eq!(p.sigma_tilde2.unwrap().value, 0.0);
    }
}
