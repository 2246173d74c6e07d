//! Hitting-time log moment generating functions via the linear BVP
//! ½φ'' + (ζ + η)φ = 0, and the time-constrained functional g(t, x) via a
//! parabolic solve.
//!
//! The BVP is discretised with Numerov's scheme and eliminated from the right
//! end in ratio form s_j = φ_{j−1}/φ_j, so one backward sweep yields the log
//! increments of φ across every unit interval of a long chain at once.

use serde::{Deserialize, Serialize};

use crate::envgen::PotentialField;
use crate::error::{Error, Result};
use crate::tridiag::{Boundary, ThetaStepper};

pub const ETA_MIN: f64 = -20.0;
pub const ETA_MAX: f64 = -1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BvpConfig {
    pub dx: f64,
    pub right_margin: f64,
    pub eta_fd_step: f64,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig {
            dx: 0.01,
            right_margin: 30.0,
            eta_fd_step: 1e-4,
        }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dx <= 0.5) {
            return Err(Error::Config(format!("bvp.dx must lie in (0, 0.5], got {}", self.dx)));
        }
        if !(self.right_margin >= 10.0) {
            return Err(Error::Config(format!(
                "bvp.right_margin must be at least 10, got {}",
                self.right_margin
            )));
        }
        if !(self.eta_fd_step > 0.0 && self.eta_fd_step < 1e-2) {
            return Err(Error::Config(format!(
                "bvp.eta_fd_step must lie in (0, 1e-2), got {}",
                self.eta_fd_step
            )));
        }
        Ok(())
    }

    /// Nodes per unit interval.
    pub fn nodes_per_unit(&self) -> usize {
        (1.0 / self.dx).round().max(1.0) as usize
    }
}

/// L_i and its first two η-derivatives at one η.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitLogMgf {
    pub index: i64,
    pub eta: f64,
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Reject η ≥ 0 and clamp the rest into [ETA_MIN, ETA_MAX].
pub fn clamp_eta(eta: f64) -> Result<f64> {
    if !(eta < 0.0) {
        return Err(Error::Domain(format!(
            "tilting defined for eta < 0 only, got {eta}"
        )));
    }
    Ok(eta.clamp(ETA_MIN, ETA_MAX))
}

/// The five-point η stencil used for derivatives.
pub fn stencil(eta: f64, rel: f64) -> Result<([f64; 5], f64)> {
    let d = rel * eta.abs();
    if eta + d >= 0.0 {
        return Err(Error::Domain(format!(
            "finite-difference stencil around {eta} crosses eta = 0"
        )));
    }
    Ok(([eta - d, eta - 0.5 * d, eta, eta + 0.5 * d, eta + d], d))
}

/// Value, first and second derivative from stencil values (Richardson-extrapolated).
pub fn combine(v: &[f64; 5], d: f64) -> [f64; 3] {
    let d1_full = (v[4] - v[0]) / (2.0 * d);
    let d1_half = (v[3] - v[1]) / d;
    let d2_full = (v[4] - 2.0 * v[2] + v[0]) / (d * d);
    let d2_half = (v[3] - 2.0 * v[2] + v[1]) / (0.25 * d * d);
    [
        v[2],
        (4.0 * d1_half - d1_full) / 3.0,
        (4.0 * d2_half - d2_full) / 3.0,
    ]
}

/// ζ sampled at `x0 + j·h`, j = 0..=N.
#[derive(Clone, Debug)]
pub struct Chain {
    x0: f64,
    h: f64,
    zeta: Vec<f64>,
}

impl Chain {
    pub fn sample(field: &PotentialField, x0: f64, h: f64, n_nodes: usize) -> Self {
        let es = field.es();
        let zeta = field
            .sample_with(n_nodes, |j| x0 + j as f64 * h)
            .into_iter()
            .map(|v| v - es)
            .collect();
        Chain { x0, h, zeta }
    }

    pub fn from_values(x0: f64, h: f64, zeta: Vec<f64>) -> Self {
        Chain { x0, h, zeta }
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    /// For every lane, ln φ(x0 + (b+1)·m·h) − ln φ(x0 + b·m·h) for blocks b < n_blocks.
    pub fn block_logs<const K: usize>(
        &self,
        etas: &[f64; K],
        m: usize,
        n_blocks: usize,
    ) -> Result<Vec<[f64; K]>> {
        let n = self.zeta.len();
        if n < 3 || m * n_blocks > n - 2 {
            return Err(Error::Numeric {
                msg: format!("chain of {n} nodes too short for {n_blocks} blocks of {m}"),
                residual: f64::NAN,
            });
        }
        // Numerov with f = −2(ζ+η): a_j = 1 + p_j, c_j = 2 − 10 p_j, p_j = h²(ζ_j+η)/6.
        // Work with σ = s − 1 and p directly; forming 1 + p first would bury the
        // η-dependence below rounding and ruin the η finite differences.
        let h2 = self.h * self.h / 6.0;
        let mut he = [0.0; K];
        for k in 0..K {
            he[k] = h2 * etas[k];
        }
        let p_at = |j: usize, k: usize| h2 * self.zeta[j] + he[k];
        let last = n - 1;
        // Robin closure: larger root of a s² − c s + a = 0 with the local coefficients.
        let mut sg = [0.0; K];
        for (k, s) in sg.iter_mut().enumerate() {
            let p = p_at(last, k);
            *s = (-12.0 * p + (-12.0 * p * (4.0 - 8.0 * p)).sqrt()) / (2.0 * (1.0 + p));
        }
        let mut out = vec![[0.0; K]; n_blocks];
        let mut prod = [1.0; K];
        let mut acc = [0.0; K];
        let top = m * n_blocks;
        let mut p_next = [0.0; K];
        let mut p_here = [0.0; K];
        for k in 0..K {
            p_next[k] = p_at(last, k);
            p_here[k] = p_at(last - 1, k);
        }
        for j in (1..last).rev() {
            let mut p_prev = [0.0; K];
            for k in 0..K {
                p_prev[k] = p_at(j - 1, k);
                let num = -10.0 * p_here[k] - p_prev[k] + (sg[k] - p_next[k]) / (1.0 + sg[k]);
                sg[k] = num / (1.0 + p_prev[k]);
            }
            if j <= top {
                for k in 0..K {
                    prod[k] *= 1.0 + sg[k];
                    if prod[k] > 1e150 {
                        acc[k] += prod[k].ln();
                        prod[k] = 1.0;
                    }
                }
                if (j - 1) % m == 0 {
                    let b = (j - 1) / m;
                    for k in 0..K {
                        let v = -(acc[k] + prod[k].ln());
                        if !v.is_finite() || !(sg[k] > -1.0) {
                            return Err(Error::Numeric {
                                msg: format!("ratio sweep broke down at node {j}"),
                                residual: sg[k],
                            });
                        }
                        out[b][k] = v;
                        prod[k] = 1.0;
                        acc[k] = 0.0;
                    }
                }
            }
            p_next = p_here;
            p_here = p_prev;
        }
        Ok(out)
    }
}

/// Chain covering units x0+1 ..= x0+n_units plus the right margin.
#[derive(Clone, Debug)]
pub struct UnitChain {
    chain: Chain,
    m: usize,
    n_units: usize,
    first: i64,
}

impl UnitChain {
    /// Units `first ..= first + n_units − 1`; unit i spans [i−1, i].
    pub fn new(field: &PotentialField, first: i64, n_units: usize, cfg: &BvpConfig) -> Self {
        let m = cfg.nodes_per_unit();
        let h = 1.0 / m as f64;
        let margin = (cfg.right_margin * m as f64).ceil() as usize;
        let n_nodes = n_units * m + margin + 1;
        let x0 = (first - 1) as f64;
        UnitChain {
            chain: Chain::sample(field, x0, h, n_nodes),
            m,
            n_units,
            first,
        }
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn first(&self) -> i64 {
        self.first
    }

    pub fn lanes<const K: usize>(&self, etas: &[f64; K]) -> Result<Vec<[f64; K]>> {
        self.chain.block_logs(etas, self.m, self.n_units)
    }

    pub fn logs(&self, eta: f64) -> Result<Vec<f64>> {
        let eta = clamp_eta(eta)?;
        Ok(self.lanes(&[eta])?.into_iter().map(|v| v[0]).collect())
    }

    /// Per unit `[L_i, L_i', L_i'']`.
    pub fn logs_with_derivs(&self, eta: f64, rel: f64) -> Result<Vec<[f64; 3]>> {
        let eta = clamp_eta(eta)?;
        let (st, d) = stencil(eta, rel)?;
        Ok(self.lanes(&st)?.iter().map(|v| combine(v, d)).collect())
    }
}

/// L_i^ζ(η).
pub fn log_mgf_unit(field: &PotentialField, i: i64, eta: f64, cfg: &BvpConfig) -> Result<f64> {
    let eta = clamp_eta(eta)?;
    Ok(UnitChain::new(field, i, 1, cfg).lanes(&[eta])?[0][0])
}

/// L_i with its η-derivatives.
pub fn unit_log_mgf(field: &PotentialField, i: i64, eta: f64, cfg: &BvpConfig) -> Result<UnitLogMgf> {
    let eta = clamp_eta(eta)?;
    let v = UnitChain::new(field, i, 1, cfg).logs_with_derivs(eta, cfg.eta_fd_step)?[0];
    Ok(UnitLogMgf {
        index: i,
        eta,
        value: v[0],
        d1: v[1],
        d2: v[2],
    })
}

/// η-derivative of order 1 or 2 of L_i.
pub fn d_log_mgf(field: &PotentialField, i: i64, eta: f64, order: u8, cfg: &BvpConfig) -> Result<f64> {
    let u = unit_log_mgf(field, i, eta, cfg)?;
    match order {
        1 => Ok(u.d1),
        2 => Ok(u.d2),
        _ => Err(Error::Domain(format!("derivative order must be 1 or 2, got {order}"))),
    }
}

fn partial_lanes<const K: usize>(
    field: &PotentialField,
    x: f64,
    etas: &[f64; K],
    cfg: &BvpConfig,
) -> Result<[f64; K]> {
    let left = x.ceil() - 1.0;
    let len = x - left;
    let m = ((len / cfg.dx).ceil() as usize).max(1);
    let h = len / m as f64;
    let n_nodes = m + (cfg.right_margin / h).ceil() as usize + 1;
    let chain = Chain::sample(field, left, h, n_nodes);
    Ok(chain.block_logs(etas, m, 1)?[0])
}

/// L_x^ζ(η) for non-integer x: the crossing from x down to ⌈x⌉−1.
pub fn log_mgf_partial(field: &PotentialField, x: f64, eta: f64, cfg: &BvpConfig) -> Result<f64> {
    if x.fract() == 0.0 {
        return Err(Error::Domain(format!("log_mgf_partial needs non-integer x, got {x}")));
    }
    let eta = clamp_eta(eta)?;
    Ok(partial_lanes(field, x, &[eta], cfg)?[0])
}

/// Σ over the units of [0, x] (with the partial crossing for non-integer x), per lane.
pub fn sum_lanes<const K: usize>(
    field: &PotentialField,
    x: f64,
    etas: &[f64; K],
    cfg: &BvpConfig,
) -> Result<[f64; K]> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("averaged log-mgf needs x >= 1, got {x}")));
    }
    let n = x.floor() as usize;
    let mut tot = [0.0; K];
    for v in UnitChain::new(field, 1, n, cfg).lanes(etas)? {
        for k in 0..K {
            tot[k] += v[k];
        }
    }
    if x.fract() != 0.0 {
        let p = partial_lanes(field, x, etas, cfg)?;
        for k in 0..K {
            tot[k] += p[k];
        }
    }
    Ok(tot)
}

/// L̄_x^ζ(η).
pub fn log_mgf_avg(field: &PotentialField, x: f64, eta: f64, cfg: &BvpConfig) -> Result<f64> {
    let eta = clamp_eta(eta)?;
    Ok(sum_lanes(field, x, &[eta], cfg)?[0] / x)
}

/// `[L̄_x, L̄_x', L̄_x'']` at η.
pub fn log_mgf_avg_derivs(field: &PotentialField, x: f64, eta: f64, cfg: &BvpConfig) -> Result<[f64; 3]> {
    let eta = clamp_eta(eta)?;
    let (st, d) = stencil(eta, cfg.eta_fd_step)?;
    let s = sum_lanes(field, x, &st, cfg)?;
    let c = combine(&s, d);
    Ok([c[0] / x, c[1] / x, c[2] / x])
}

/// Root of (L̄_x)'(η) = 1/v.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltSolution {
    pub x: f64,
    pub v: f64,
    pub eta_x: f64,
    pub found: bool,
    /// L̄_x(η_x); 0 when not found.
    pub l_avg: f64,
    pub d1: f64,
    pub d2: f64,
}

impl TiltSolution {
    /// Empirical Legendre transform η_x/v − L̄_x(η_x).
    pub fn legendre(&self) -> f64 {
        self.eta_x / self.v - self.l_avg
    }
}

/// Solve `f(η)[1] = 1/v` for an increasing derivative given by `f`.
pub fn solve_tilt<F>(x: f64, v: f64, tol: f64, f: F) -> Result<TiltSolution>
where
    F: Fn(f64) -> Result<[f64; 3]>,
{
    if !(v > 0.0) {
        return Err(Error::Domain(format!("velocity must be positive, got {v}")));
    }
    let target = 1.0 / v;
    let hi_val = f(ETA_MAX)?;
    if hi_val[1] < target {
        return Ok(TiltSolution {
            x,
            v,
            eta_x: 0.0,
            found: false,
            l_avg: 0.0,
            d1: hi_val[1],
            d2: hi_val[2],
        });
    }
    let lo_val = f(ETA_MIN)?;
    if lo_val[1] > target {
        return Err(Error::Range(format!(
            "tilt for v = {v} lies below eta = {ETA_MIN}"
        )));
    }
    let (mut lo, mut hi) = (ETA_MIN, ETA_MAX);
    // Newton in ln|η| space, safeguarded by the bracket.
    let mut eta = -1.0 / (2.0 * target * target);
    if !(eta > lo && eta < hi) {
        eta = -(lo * hi).sqrt();
    }
    for _ in 0..200 {
        let val = f(eta)?;
        let r = val[1] - target;
        // once the bracket is at rounding level the derivative noise sets the floor
        let pinned = hi - lo <= 1e-12 * hi.abs() && (r * v).abs() < 1e-7;
        if (r * v).abs() < tol || pinned {
            return Ok(TiltSolution {
                x,
                v,
                eta_x: eta,
                found: true,
                l_avg: val[0],
                d1: val[1],
                d2: val[2],
            });
        }
        if r > 0.0 {
            hi = eta;
        } else {
            lo = eta;
        }
        let mut next = eta - r / val[2];
        if !(next > lo && next < hi) || !next.is_finite() {
            next = -(lo * hi).sqrt();
        }
        if hi - lo < 1e-15 * hi.abs() {
            next = hi;
        }
        eta = next;
    }
    let val = f(eta)?;
    Err(Error::Numeric {
        msg: format!("tilt root for x = {x}, v = {v} did not converge"),
        residual: val[1] * v - 1.0,
    })
}

/// Residual tolerance for |(L̄_x)'(η_x)·v − 1|.
pub const TILT_TOL: f64 = 1e-10;

/// η_x^ζ(v) for the field.
pub fn empirical_tilt(field: &PotentialField, x: f64, v: f64, cfg: &BvpConfig) -> Result<TiltSolution> {
    solve_tilt(x, v, TILT_TOL, |eta| log_mgf_avg_derivs(field, x, eta, cfg))
}

/// Tilts for many integer x on one chain.
pub struct TiltChain {
    chain: UnitChain,
    rel: f64,
}

impl TiltChain {
    pub fn new(field: &PotentialField, x_max: usize, cfg: &BvpConfig) -> Self {
        TiltChain {
            chain: UnitChain::new(field, 1, x_max, cfg),
            rel: cfg.eta_fd_step,
        }
    }

    /// `[L̄_x, L̄_x', L̄_x'']` for each requested integer x.
    pub fn averages(&self, xs: &[usize], eta: f64) -> Result<Vec<[f64; 3]>> {
        let eta = clamp_eta(eta)?;
        let (st, d) = stencil(eta, self.rel)?;
        let lanes = self.chain.lanes(&st)?;
        let mut out = Vec::with_capacity(xs.len());
        let mut acc = [0.0; 5];
        let mut done = 0usize;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by_key(|&i| xs[i]);
        let mut res = vec![[0.0; 3]; xs.len()];
        for i in order {
            let x = xs[i];
            assert!(x >= 1 && x <= self.chain.n_units(), "x = {x} outside chain");
            while done < x {
                for k in 0..5 {
                    acc[k] += lanes[done][k];
                }
                done += 1;
            }
            let c = combine(&acc, d);
            res[i] = [c[0] / x as f64, c[1] / x as f64, c[2] / x as f64];
        }
        out.extend(res);
        Ok(out)
    }

    pub fn tilt(&self, x: usize, v: f64) -> Result<TiltSolution> {
        solve_tilt(x as f64, v, TILT_TOL, |eta| Ok(self.averages(&[x], eta)?[0]))
    }

    /// Per-unit L_i(η) for units 1..=n.
    pub fn unit_logs(&self, eta: f64) -> Result<Vec<f64>> {
        self.chain.logs(eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionalConfig {
    pub dx: f64,
    pub dt: f64,
    pub margin: f64,
    pub k_win: f64,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        FunctionalConfig {
            dx: 0.05,
            dt: 0.01,
            margin: 20.0,
            k_win: 1.0,
        }
    }
}

/// ln g(t, x) and ln g(t − K, x) for g(s, y) = E_y[e^{∫_0^{H_0} ζ}; H_0 ≤ s].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingFunctional {
    pub x: f64,
    pub t: f64,
    pub k_win: f64,
    pub ln_g: f64,
    pub ln_g_lag: f64,
}

impl HittingFunctional {
    pub fn g(&self) -> f64 {
        self.ln_g.exp()
    }

    /// ln Y^≈ = ln(g(t) − g(t − K)).
    pub fn ln_y_approx(&self) -> f64 {
        self.ln_g + (-(self.ln_g_lag - self.ln_g).exp()).ln_1p()
    }

    /// ln Y^> = ln g(t − K).
    pub fn ln_y_greater(&self) -> f64 {
        self.ln_g_lag
    }
}

/// Exponential weight h = g·e^{κy + μt} used to flatten g along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayWeight {
    pub kappa: f64,
    pub mu: f64,
}

impl RayWeight {
    /// Weight matched to a tilt: κ = −L̄(η), μ = η.
    pub fn from_tilt(t: &TiltSolution) -> Self {
        if t.found {
            RayWeight {
                kappa: -t.l_avg,
                mu: t.eta_x,
            }
        } else {
            RayWeight { kappa: 0.0, mu: 0.0 }
        }
    }
}

/// g at (t, x) and (t − K, x) for every x on the ray t = x/v, from a single solve.
pub fn hitting_functional_ray(
    field: &PotentialField,
    v: f64,
    xs: &[f64],
    weight: RayWeight,
    cfg: &FunctionalConfig,
) -> Result<Vec<HittingFunctional>> {
    let times: Vec<f64> = xs.iter().map(|&x| x / v).collect();
    hitting_functional_points(field, xs, &times, weight, cfg)
}

/// g at (t_k, x_k) and (t_k − K, x_k).
pub fn hitting_functional_points(
    field: &PotentialField,
    xs: &[f64],
    ts: &[f64],
    weight: RayWeight,
    cfg: &FunctionalConfig,
) -> Result<Vec<HittingFunctional>> {
    assert_eq!(xs.len(), ts.len());
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    for (&x, &t) in xs.iter().zip(ts) {
        if !(x > 0.0 && t > 0.0) {
            return Err(Error::Domain(format!("need x, t > 0, got x = {x}, t = {t}")));
        }
        if t <= cfg.k_win {
            return Err(Error::Window { t, k_win: cfg.k_win });
        }
    }
    let dx = cfg.dx;
    let dt = cfg.dt;
    let x_max = xs.iter().cloned().fold(0.0, f64::max);
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    let n = ((x_max + cfg.margin) / dx).ceil() as usize;
    // unknowns are nodes 1..n−1; node 0 carries the boundary value, node n is absorbing.
    let zeta: Vec<f64> = field
        .sample_nodes(1, dx, n - 1)
        .into_iter()
        .map(|v| v - field.es())
        .collect();
    let RayWeight { kappa, mu } = weight;
    let diff = 0.5 / (dx * dx);
    let adv = kappa / (2.0 * dx);
    let lo = diff + adv;
    let up = diff - adv;
    let di = -2.0 * diff;
    let m = n - 1;
    let cn = ThetaStepper::new(m, lo, di, up, Boundary::Dirichlet, Boundary::Dirichlet, 0.5, dt);
    let sub = 4usize;
    let be = ThetaStepper::new(
        m,
        lo,
        di,
        up,
        Boundary::Dirichlet,
        Boundary::Dirichlet,
        1.0,
        dt / sub as f64,
    );
    let rate: Vec<f64> = zeta.iter().map(|z| z + 0.5 * kappa * kappa + mu).collect();
    let half: Vec<f64> = rate.iter().map(|r| (0.5 * dt * r).exp()).collect();
    let half_sub: Vec<f64> = rate.iter().map(|r| (0.5 * dt / sub as f64 * r).exp()).collect();

    // ln h at probe nodes, tracked through time
    let probe = |u: &[f64], x: f64, log_off: f64| -> f64 {
        let p = x / dx;
        let j = p.floor() as usize;
        let w = p - j as f64;
        let val = |i: usize| if i == 0 { 0.0 } else { u[i - 1] };
        let (a, b) = (val(j), val(j + 1));
        if w < 1e-9 {
            return a.ln() + log_off;
        }
        if a > 0.0 && b > 0.0 {
            (1.0 - w) * a.ln() + w * b.ln() + log_off
        } else {
            ((1.0 - w) * a + w * b).ln() + log_off
        }
    };
    let mut u = vec![0.0; m];
    let mut scratch = Vec::new();
    let mut log_off = 0.0f64;
    let mut t = 0.0f64;
    let steps = (t_max / dt).ceil() as usize + 1;
    let mut targets: Vec<(usize, f64, bool)> = Vec::new();
    for (k, &tk) in ts.iter().enumerate() {
        targets.push((k, tk, false));
        targets.push((k, tk - cfg.k_win, true));
    }
    targets.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut next = 0usize;
    let mut out: Vec<HittingFunctional> = xs
        .iter()
        .zip(ts)
        .map(|(&x, &t)| HittingFunctional {
            x,
            t,
            k_win: cfg.k_win,
            ln_g: f64::NAN,
            ln_g_lag: f64::NAN,
        })
        .collect();
    let mut prev_ln: Vec<f64> = xs.iter().map(|_| f64::NEG_INFINITY).collect();
    // boundary value of h at node 0 is e^{μt} relative to the running log offset
    let bval = |t: f64, log_off: f64| (mu * t - log_off).exp();
    for step in 0..steps {
        if step == 0 {
            let sdt = dt / sub as f64;
            for q in 0..sub {
                let t0 = q as f64 * sdt;
                let t1 = t0 + sdt;
                for (x, e) in u.iter_mut().zip(&half_sub) {
                    *x *= e;
                }
                be.step(&mut u, &mut scratch, (bval(t0, log_off), bval(t1, log_off)), (0.0, 0.0));
                for (x, e) in u.iter_mut().zip(&half_sub) {
                    *x *= e;
                }
            }
        } else {
            for (x, e) in u.iter_mut().zip(&half) {
                *x *= e;
            }
            cn.step(&mut u, &mut scratch, (bval(t, log_off), bval(t + dt, log_off)), (0.0, 0.0));
            for (x, e) in u.iter_mut().zip(&half) {
                *x *= e;
            }
        }
        let t_new = t + dt;
        let mx = u.iter().cloned().fold(bval(t_new, log_off), f64::max);
        if !(1e-100..=1e100).contains(&mx) {
            let l = mx.ln();
            for x in u.iter_mut() {
                *x /= mx;
            }
            log_off += l;
        }
        let cur: Vec<f64> = xs.iter().map(|&x| probe(&u, x, log_off)).collect();
        while next < targets.len() && targets[next].1 <= t_new + 1e-12 {
            let (k, tk, lag) = targets[next];
            let w = ((tk - t) / dt).clamp(0.0, 1.0);
            let ln_h = if prev_ln[k].is_finite() {
                (1.0 - w) * prev_ln[k] + w * cur[k]
            } else {
                cur[k]
            };
            let ln_g = ln_h - kappa * xs[k] - mu * tk;
            if lag {
                out[k].ln_g_lag = ln_g;
            } else {
                out[k].ln_g = ln_g;
            }
            next += 1;
        }
        prev_ln = cur;
        t = t_new;
        if next == targets.len() {
            break;
        }
    }
    Ok(out)
}

/// (g(t, x), g(t − K, x)) with the weight matched to the empirical tilt at v = x/t.
pub fn hitting_time_functional(
    field: &PotentialField,
    x: f64,
    t: f64,
    bvp: &BvpConfig,
    cfg: &FunctionalConfig,
) -> Result<HittingFunctional> {
    if t <= cfg.k_win {
        return Err(Error::Window { t, k_win: cfg.k_win });
    }
    let weight = if x >= 1.0 {
        match empirical_tilt(field, x, x / t, bvp) {
            Ok(tilt) => RayWeight::from_tilt(&tilt),
            Err(Error::Range(_)) => RayWeight { kappa: 0.0, mu: 0.0 },
            Err(e) => return Err(e),
        }
    } else {
        RayWeight { kappa: 0.0, mu: 0.0 }
    };
    Ok(hitting_functional_points(field, &[x], &[t], weight, cfg)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::PotentialSpec;

    fn flat(c: f64) -> PotentialField {
        PotentialField::new(PotentialSpec::constant_below(1.0, 1.0 - c)).unwrap()
    }

    #[test]
    fn closed_forms() {
        let cfg = BvpConfig::default();
        let f = flat(0.0);
        assert!((log_mgf_unit(&f, 1, -0.5, &cfg).unwrap() + 1.0).abs() < 1e-8);
        assert!((log_mgf_unit(&f, 3, -2.0, &cfg).unwrap() + 2.0).abs() < 1e-8);
        let g = flat(-1.5);
        assert!((log_mgf_unit(&g, 1, -0.5, &cfg).unwrap() + 2.0).abs() < 1e-8);
        assert!((d_log_mgf(&f, 1, -0.5, 1, &cfg).unwrap() - 1.0).abs() < 1e-7);
        assert!((d_log_mgf(&f, 1, -0.5, 2, &cfg).unwrap() - 1.0).abs() < 1e-5);
        assert!((log_mgf_partial(&f, 4.5, -0.5, &cfg).unwrap() + 0.5).abs() < 1e-8);
        assert!((log_mgf_avg(&f, 7.3, -0.5, &cfg).unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn domain_errors() {
        let cfg = BvpConfig::default();
        let f = flat(0.0);
        assert!(matches!(log_mgf_unit(&f, 1, 0.0, &cfg), Err(Error::Domain(_))));
        assert!(matches!(log_mgf_partial(&f, 2.0, -1.0, &cfg), Err(Error::Domain(_))));
        assert!(d_log_mgf(&f, 1, -1.0, 3, &cfg).is_err());
    }

    #[test]
    fn tilt_closed_form() {
        let cfg = BvpConfig::default();
        let f = flat(0.0);
        for &v in &[0.8, 1.5, 2.5] {
            let t = empirical_tilt(&f, 5.0, v, &cfg).unwrap();
            assert!(t.found);
            assert!((t.eta_x + v * v / 2.0).abs() < 1e-6, "{t:?}");
            assert!((t.legendre() - v / 2.0).abs() < 1e-6);
        }
        // ζ ≡ −1: L' at 0 is 1/√2, so v < √2 has no negative root.
        let g = flat(-1.0);
        let t = empirical_tilt(&g, 5.0, 1.0, &cfg).unwrap();
        assert!(!t.found);
        assert_eq!(t.eta_x, 0.0);
    }

    #[test]
    fn functional_reflection() {
        let f = flat(0.0);
        let bvp = BvpConfig::default();
        let cfg = FunctionalConfig::default();
        let r = hitting_time_functional(&f, 2.0, 4.0, &bvp, &cfg).unwrap();
        let exact = 2.0 * 0.158_655_253_931_457_05;
        assert!((r.g() - exact).abs() < 1e-3, "{}", r.g());
        assert!(r.ln_g_lag < r.ln_g);
        assert!(r.g() <= 1.0);
    }
}
