//! Moving-window reaction-diffusion engine shared by the PAM and F-KPP solvers,
//! plus the trajectory and front-trace types they return.

use serde::{Deserialize, Serialize};

use crate::envgen::PotentialField;
use crate::error::{Error, Result};
use crate::tridiag::{Boundary, ThetaStepper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcKind {
    Heaviside,
    Box,
    ScaledHeaviside,
}

/// u₀ ∈ {1_{(−∞,0]}, δ'·1_{[−δ',0]}, C'·1_{(−∞,0]}}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    pub kind: IcKind,
    pub delta_prime: f64,
    pub c_prime: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition {
            kind: IcKind::Heaviside,
            delta_prime: 0.5,
            c_prime: 2.0,
        }
    }
}

impl InitialCondition {
    pub fn heaviside() -> Self {
        Self::default()
    }

    pub fn boxed(delta_prime: f64) -> Self {
        InitialCondition {
            kind: IcKind::Box,
            delta_prime,
            ..Self::default()
        }
    }

    pub fn scaled(c_prime: f64) -> Self {
        InitialCondition {
            kind: IcKind::ScaledHeaviside,
            c_prime,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_prime > 0.0 && self.delta_prime < 1.0) {
            return Err(Error::Config(format!("delta_prime must lie in (0,1), got {}", self.delta_prime)));
        }
        if !(self.c_prime > 1.0) {
            return Err(Error::Config(format!("c_prime must exceed 1, got {}", self.c_prime)));
        }
        Ok(())
    }

    fn support(&self) -> (f64, f64, f64) {
        match self.kind {
            IcKind::Heaviside => (f64::NEG_INFINITY, 0.0, 1.0),
            IcKind::Box => (-self.delta_prime, 0.0, self.delta_prime),
            IcKind::ScaledHeaviside => (f64::NEG_INFINITY, 0.0, self.c_prime),
        }
    }

    /// Pointwise value (closed intervals).
    pub fn value(&self, x: f64) -> f64 {
        let (lo, hi, h) = self.support();
        if x >= lo && x <= hi {
            h
        } else {
            0.0
        }
    }

    /// Mean over [x − dx/2, x + dx/2].
    pub fn cell_average(&self, x: f64, dx: f64) -> f64 {
        let (lo, hi, h) = self.support();
        let a = (x - 0.5 * dx).max(lo);
        let b = (x + 0.5 * dx).min(hi);
        if b <= a {
            0.0
        } else {
            h * (b - a) / dx
        }
    }

    /// Height of the datum; sup u₀.
    pub fn height(&self) -> f64 {
        self.support().2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dx: f64,
    pub dt: f64,
    pub w_left: f64,
    pub w_right: f64,
    pub recenter: bool,
    /// Backward-Euler substeps replacing the first Crank–Nicolson step.
    pub startup_substeps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dx: 0.05,
            dt: 0.01,
            w_left: 40.0,
            w_right: 60.0,
            recenter: true,
            startup_substeps: 4,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("dx and dt must be positive".into()));
        }
        if !(self.w_left > 2.0 * self.dx && self.w_right > 2.0 * self.dx) {
            return Err(Error::Config("window margins must span several cells".into()));
        }
        Ok(())
    }
}

/// What to record while solving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub horizon: f64,
    /// Levels a (PAM) or ε (F-KPP). The first one steers the window.
    pub thresholds: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub snapshot_every: Option<f64>,
    /// Positions x whose breakpoint times T_x are recorded online.
    pub probes: Vec<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            horizon: 10.0,
            thresholds: vec![0.5],
            snapshot_times: Vec::new(),
            snapshot_every: None,
            probes: Vec::new(),
        }
    }
}

impl SolveOptions {
    pub fn new(horizon: f64, thresholds: Vec<f64>) -> Self {
        SolveOptions {
            horizon,
            thresholds,
            ..Self::default()
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_snapshot_every(mut self, every: f64) -> Self {
        self.snapshot_every = Some(every);
        self
    }

    pub fn with_probes(mut self, probes: Vec<f64>) -> Self {
        self.probes = probes;
        self
    }
}

/// Window state at one time: u(t, (first + j)·dx) = exp(log_offset)·values[j].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub first: i64,
    pub dx: f64,
    pub log_offset: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn x(&self, j: usize) -> f64 {
        (self.first + j as i64) as f64 * self.dx
    }

    pub fn window_left(&self) -> f64 {
        self.x(0)
    }

    pub fn window_right(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    pub fn ln_u_node(&self, j: usize) -> f64 {
        let v = self.values[j];
        if v > 0.0 {
            self.log_offset + v.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// ln u at x by linear interpolation in ln u; None outside the window.
    pub fn ln_u(&self, x: f64) -> Option<f64> {
        let p = x / self.dx - self.first as f64;
        if p < -1e-9 || p > (self.values.len() - 1) as f64 + 1e-9 {
            return None;
        }
        let p = p.clamp(0.0, (self.values.len() - 1) as f64);
        let j = (p.floor() as usize).min(self.values.len() - 1);
        let w = p - j as f64;
        if w < 1e-9 || j + 1 >= self.values.len() {
            return Some(self.ln_u_node(j));
        }
        let (a, b) = (self.ln_u_node(j), self.ln_u_node(j + 1));
        if a.is_finite() && b.is_finite() {
            Some((1.0 - w) * a + w * b)
        } else {
            let v = (1.0 - w) * self.values[j] + w * self.values[j + 1];
            Some(if v > 0.0 { self.log_offset + v.ln() } else { f64::NEG_INFINITY })
        }
    }

    /// Largest x with u ≥ a, refined linearly in ln u; −∞ if nowhere.
    pub fn front(&self, a: f64) -> f64 {
        front_of(&self.values, self.first, self.dx, (a.ln() - self.log_offset).exp(), a.ln() - self.log_offset)
    }
}

fn front_of(values: &[f64], first: i64, dx: f64, thr: f64, ln_thr: f64) -> f64 {
    let n = values.len();
    let mut j = n;
    while j > 0 {
        if values[j - 1] >= thr && values[j - 1] > 0.0 {
            break;
        }
        j -= 1;
    }
    if j == 0 {
        return f64::NEG_INFINITY;
    }
    let j = j - 1;
    let xj = (first + j as i64) as f64 * dx;
    if j + 1 >= n || values[j + 1] <= 0.0 {
        return xj;
    }
    let a = values[j].ln();
    let b = values[j + 1].ln();
    let w = ((a - ln_thr) / (a - b)).clamp(0.0, 1.0);
    xj + dx * w
}

/// Front positions for one threshold at every step, with breakpoint records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub threshold: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// (x, T_x); T = +∞ when not reached by the horizon, NaN if the window lost it.
    pub breakpoints: Vec<(f64, f64)>,
}

impl FrontTrace {
    pub fn at(&self, t: f64, dt: f64) -> Option<f64> {
        let i = (t / dt).round() as usize;
        if i < self.times.len() && (self.times[i] - t).abs() <= 0.5 * dt {
            Some(self.positions[i])
        } else {
            None
        }
    }

    pub fn breakpoint(&self, x: f64) -> Option<f64> {
        self.breakpoints.iter().find(|(p, _)| (p - x).abs() < 1e-12).map(|b| b.1)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("t,m,a\n");
        for (t, m) in self.times.iter().zip(&self.positions) {
            s.push_str(&format!("{},{},{}\n", t, m, self.threshold));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Pam,
    Kpp,
}

/// Output of a PAM or F-KPP solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrajectory {
    pub equation: Equation,
    pub dx: f64,
    pub dt: f64,
    pub horizon: f64,
    pub snapshots: Vec<Snapshot>,
    pub fronts: Vec<FrontTrace>,
    /// Largest clamp applied to keep F-KPP values in [0, 1].
    pub max_clamp: f64,
}

impl SolutionTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 0.5 * self.dt)
    }

    pub fn trace(&self, a: f64) -> Option<&FrontTrace> {
        self.fronts.iter().find(|f| (f.threshold - a).abs() <= 1e-14 * a.abs().max(1.0))
    }

    /// Front at level a and time t, from the trace if tracked, else from a snapshot.
    pub fn front(&self, a: f64, t: f64) -> Result<f64> {
        if let Some(m) = self.trace(a).and_then(|tr| tr.at(t, self.dt)) {
            return Ok(m);
        }
        match self.snapshot_at(t) {
            Some(s) => Ok(s.front(a)),
            None => Err(Error::Domain(format!("time {t} is neither tracked nor snapshotted"))),
        }
    }

    /// First snapshot time with u(t, x) ≥ a, interpolated linearly in ln u.
    pub fn breakpoint_from_snapshots(&self, x: f64, a: f64) -> f64 {
        let la = a.ln();
        let mut prev: Option<(f64, f64)> = None;
        for s in &self.snapshots {
            let cur = match s.ln_u(x) {
                Some(v) => v,
                None if x < s.window_left() => f64::INFINITY,
                None => f64::NEG_INFINITY,
            };
            if cur >= la {
                return match prev {
                    Some((tp, lp)) if lp.is_finite() && cur.is_finite() && cur > lp => {
                        tp + (s.t - tp) * (la - lp) / (cur - lp)
                    }
                    _ => s.t,
                };
            }
            prev = Some((s.t, cur));
        }
        f64::INFINITY
    }

    /// Long CSV (t, x, ln_u) of all snapshots.
    pub fn snapshots_csv(&self) -> String {
        let mut s = String::from("t,x,ln_u\n");
        for snap in &self.snapshots {
            for j in 0..snap.values.len() {
                s.push_str(&format!("{},{},{}\n", snap.t, snap.x(j), snap.ln_u_node(j)));
            }
        }
        s
    }

    pub fn fronts_csv(&self) -> String {
        let mut s = String::from("t,m,a\n");
        for f in &self.fronts {
            for (t, m) in f.times.iter().zip(&f.positions) {
                s.push_str(&format!("{},{},{}\n", t, m, f.threshold));
            }
        }
        s
    }
}

/// Reaction over a substep of length τ.
pub(crate) trait Reaction {
    /// Recompute per-node data for the window potential `xi`.
    fn prepare(&mut self, xi: &[f64], dt: f64, sub: usize);
    /// Drop the first k nodes and append data for `new_xi`.
    fn shift(&mut self, k: usize, new_xi: &[f64], dt: f64, sub: usize);
    /// Apply the half step; `startup` selects the substep length. Returns clamp magnitude.
    fn half_step(&mut self, u: &mut [f64], xi: &[f64], startup: bool) -> f64;
}

pub(crate) struct Engine<'a, R: Reaction> {
    field: &'a PotentialField,
    grid: GridConfig,
    first: i64,
    u: Vec<f64>,
    xi: Vec<f64>,
    log_off: f64,
    renormalize: bool,
    reaction: R,
    cn: ThetaStepper,
    be: Option<ThetaStepper>,
    scratch: Vec<f64>,
}

impl<'a, R: Reaction> Engine<'a, R> {
    pub fn new(field: &'a PotentialField, grid: GridConfig, ic: &InitialCondition, reaction: R, renormalize: bool) -> Self {
        let dx = grid.dx;
        let first = -((grid.w_left / dx).round() as i64);
        let n = ((grid.w_left + grid.w_right) / dx).round() as usize + 1;
        let u: Vec<f64> = (0..n)
            .map(|j| ic.cell_average((first + j as i64) as f64 * dx, dx))
            .collect();
        let xi = field.sample_nodes(first, dx, n);
        let c = 0.5 / (dx * dx);
        let cn = ThetaStepper::compact(n, c, -2.0 * c, c, Boundary::Neumann, Boundary::Dirichlet, 0.5, grid.dt);
        let sub = grid.startup_substeps;
        let be = (sub > 0).then(|| {
            ThetaStepper::compact(n, c, -2.0 * c, c, Boundary::Neumann, Boundary::Dirichlet, 1.0, grid.dt / sub as f64)
        });
        let mut reaction = reaction;
        reaction.prepare(&xi, grid.dt, sub.max(1));
        let mut e = Engine {
            field,
            grid,
            first,
            u,
            xi,
            log_off: 0.0,
            renormalize,
            reaction,
            cn,
            be,
            scratch: Vec::new(),
        };
        if renormalize {
            e.normalize();
        }
        e
    }

    fn normalize(&mut self) {
        let m = self.u.iter().cloned().fold(0.0, f64::max);
        if m > 0.0 && m != 1.0 {
            for v in self.u.iter_mut() {
                *v /= m;
            }
            self.log_off += m.ln();
        }
    }

    fn step(&mut self, startup: bool) -> f64 {
        let mut clamp = 0.0f64;
        if startup {
            if let Some(be) = &self.be {
                for _ in 0..self.grid.startup_substeps {
                    clamp = clamp.max(self.reaction.half_step(&mut self.u, &self.xi, true));
                    be.step(&mut self.u, &mut self.scratch, (0.0, 0.0), (0.0, 0.0));
                    clamp = clamp.max(self.reaction.half_step(&mut self.u, &self.xi, true));
                }
                if self.renormalize {
                    self.normalize();
                }
                return clamp;
            }
        }
        clamp = clamp.max(self.reaction.half_step(&mut self.u, &self.xi, false));
        self.cn.step(&mut self.u, &mut self.scratch, (0.0, 0.0), (0.0, 0.0));
        clamp = clamp.max(self.reaction.half_step(&mut self.u, &self.xi, false));
        if self.renormalize {
            self.normalize();
        }
        clamp
    }

    fn front(&self, a: f64) -> f64 {
        let ln_thr = a.ln() - self.log_off;
        front_of(&self.u, self.first, self.grid.dx, ln_thr.exp(), ln_thr)
    }

    fn ln_u(&self, x: f64) -> Option<f64> {
        let p = x / self.grid.dx - self.first as f64;
        let n = self.u.len();
        if p < 0.0 || p > (n - 1) as f64 {
            return None;
        }
        let j = (p.floor() as usize).min(n - 1);
        let w = p - j as f64;
        let node = |i: usize| {
            if self.u[i] > 0.0 {
                self.log_off + self.u[i].ln()
            } else {
                f64::NEG_INFINITY
            }
        };
        if w < 1e-9 || j + 1 >= n {
            return Some(node(j));
        }
        let (a, b) = (node(j), node(j + 1));
        if a.is_finite() && b.is_finite() {
            Some((1.0 - w) * a + w * b)
        } else {
            let v = (1.0 - w) * self.u[j] + w * self.u[j + 1];
            Some(if v > 0.0 { self.log_off + v.ln() } else { f64::NEG_INFINITY })
        }
    }

    fn recenter(&mut self, m: f64) {
        let dx = self.grid.dx;
        let want = ((m - self.grid.w_left) / dx).floor() as i64;
        if want <= self.first {
            return;
        }
        let n = self.u.len();
        let k = ((want - self.first) as usize).min(n);
        self.u.drain(..k);
        self.u.extend(std::iter::repeat_n(0.0, k));
        let new_xi = self.field.sample_nodes(self.first + n as i64, dx, k);
        self.xi.drain(..k);
        self.xi.extend_from_slice(&new_xi);
        self.reaction.shift(k, &new_xi, self.grid.dt, self.grid.startup_substeps.max(1));
        self.first += k as i64;
    }

    fn snapshot(&self, t: f64) -> Snapshot {
        Snapshot {
            t,
            first: self.first,
            dx: self.grid.dx,
            log_offset: self.log_off,
            values: self.u.clone(),
        }
    }

    fn right_edge(&self) -> f64 {
        (self.first + self.u.len() as i64 - 1) as f64 * self.grid.dx
    }

    /// Run to the horizon, recording fronts, breakpoints and snapshots.
    pub fn run(
        mut self,
        equation: Equation,
        ic: &InitialCondition,
        opts: &SolveOptions,
        max_clamp_allowed: Option<f64>,
    ) -> Result<SolutionTrajectory> {
        if !(opts.horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {}", opts.horizon)));
        }
        if opts.thresholds.is_empty() || opts.thresholds.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Domain("thresholds must be positive and non-empty".into()));
        }
        let dt = self.grid.dt;
        let steps = (opts.horizon / dt).round() as usize;
        let mut snap_steps: Vec<usize> = opts
            .snapshot_times
            .iter()
            .filter(|&&t| t >= 0.0 && t <= opts.horizon + 0.5 * dt)
            .map(|&t| (t / dt).round() as usize)
            .collect();
        if let Some(every) = opts.snapshot_every {
            let k = ((every / dt).round() as usize).max(1);
            snap_steps.extend((0..=steps).step_by(k));
        }
        snap_steps.push(steps);
        snap_steps.sort_unstable();
        snap_steps.dedup();
        let mut snap_iter = snap_steps.into_iter().peekable();

        let mut traces: Vec<FrontTrace> = opts
            .thresholds
            .iter()
            .map(|&a| FrontTrace {
                threshold: a,
                times: Vec::with_capacity(steps + 1),
                positions: Vec::with_capacity(steps + 1),
                breakpoints: Vec::new(),
            })
            .collect();
        // t = 0 uses the sup of the datum's superlevel set
        for tr in traces.iter_mut() {
            tr.times.push(0.0);
            tr.positions.push(if ic.height() >= tr.threshold { 0.0 } else { f64::NEG_INFINITY });
        }
        let np = opts.probes.len();
        let mut bp: Vec<Vec<f64>> = traces.iter().map(|_| vec![f64::INFINITY; np]).collect();
        let mut pending: Vec<Vec<bool>> = traces.iter().map(|_| vec![true; np]).collect();
        let mut prev_ln: Vec<f64> = vec![f64::NEG_INFINITY; np];
        for (k, tr) in traces.iter().enumerate() {
            for (i, &x) in opts.probes.iter().enumerate() {
                if ic.value(x) >= tr.threshold {
                    bp[k][i] = 0.0;
                    pending[k][i] = false;
                }
            }
        }
        for (i, &x) in opts.probes.iter().enumerate() {
            prev_ln[i] = self.ln_u(x).unwrap_or(f64::NEG_INFINITY);
        }
        let mut snapshots = Vec::new();
        if snap_iter.peek() == Some(&0) {
            snapshots.push(self.snapshot(0.0));
            snap_iter.next();
        }
        let mut max_clamp = 0.0f64;
        for n in 1..=steps {
            let c = self.step(n == 1);
            max_clamp = max_clamp.max(c);
            let t = n as f64 * dt;
            if let Some(lim) = max_clamp_allowed {
                if c > lim {
                    return Err(Error::Stability { t, clamp: c });
                }
            }
            let m0 = self.front(opts.thresholds[0]);
            if m0 >= self.right_edge() - 0.5 * self.grid.dx {
                return Err(Error::WindowBreach {
                    t,
                    front: m0,
                    edge: self.right_edge(),
                    w_right: self.grid.w_right,
                });
            }
            for (k, tr) in traces.iter_mut().enumerate() {
                let m = if k == 0 { m0 } else { self.front(tr.threshold) };
                tr.times.push(t);
                tr.positions.push(m);
            }
            for (i, &x) in opts.probes.iter().enumerate() {
                let cur = match self.ln_u(x) {
                    Some(v) => v,
                    None if x < self.first as f64 * self.grid.dx => f64::NAN,
                    None => f64::NEG_INFINITY,
                };
                for (k, tr) in traces.iter().enumerate() {
                    if !pending[k][i] {
                        continue;
                    }
                    let la = tr.threshold.ln();
                    if cur.is_nan() {
                        bp[k][i] = f64::NAN;
                        pending[k][i] = false;
                    } else if cur >= la {
                        let p = prev_ln[i];
                        bp[k][i] = if p.is_finite() && cur > p {
                            t - dt + dt * (la - p) / (cur - p)
                        } else {
                            t
                        };
                        pending[k][i] = false;
                    }
                }
                prev_ln[i] = cur;
            }
            if snap_iter.peek() == Some(&n) {
                snapshots.push(self.snapshot(t));
                snap_iter.next();
            }
            if self.grid.recenter && m0.is_finite() {
                self.recenter(m0);
                for (i, &x) in opts.probes.iter().enumerate() {
                    if let Some(v) = self.ln_u(x) {
                        prev_ln[i] = v;
                    }
                }
            }
        }
        for (k, tr) in traces.iter_mut().enumerate() {
            tr.breakpoints = opts.probes.iter().copied().zip(bp[k].iter().copied()).collect();
        }
        Ok(SolutionTrajectory {
            equation,
            dx: self.grid.dx,
            dt,
            horizon: steps as f64 * dt,
            snapshots,
            fronts: traces,
            max_clamp,
        })
    }
}
