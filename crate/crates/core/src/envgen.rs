//! Random potentials: a constant baseline, a smoothed block field and the
//! Matérn hardcore bump field. Values are pure functions of the seed and
//! the effective coordinate, so moving windows can re-sample them freely.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use parking_lot::RwLock;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{cell_stream, stream_rng};

const CACHE_LIMIT: usize = 1 << 18;
/// Stream id reserved for the block grid offset, never hit by a cell index.
const OFFSET_STREAM: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Constant,
    SmoothedBlock,
    MaternBump,
}

fn default_epsilon() -> f64 {
    0.5
}
fn default_one() -> f64 {
    1.0
}

/// Parameters of a potential. For `constant` the field is identically `ei`;
/// `es > ei` is allowed there and yields the shifted potential ζ ≡ ei − es.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub ei: f64,
    pub es: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_one")]
    pub kernel_radius: f64,
    #[serde(default = "default_one")]
    pub cell_size: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PotentialSpec {
    pub fn constant(level: f64) -> Self {
        Self::constant_below(level, level)
    }

    /// ξ ≡ value with a looser upper bound es, i.e. ζ ≡ value − es.
    pub fn constant_below(value: f64, es: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Constant,
            ei: value,
            es,
            a: None,
            epsilon: default_epsilon(),
            kernel_radius: 1.0,
            cell_size: 1.0,
            seed: 0,
        }
    }

    pub fn matern_bump(ei: f64, a: f64, epsilon: f64, seed: u64) -> Self {
        PotentialSpec {
            kind: PotentialKind::MaternBump,
            ei,
            es: ei + a,
            a: Some(a),
            epsilon,
            kernel_radius: 1.0,
            cell_size: 1.0,
            seed,
        }
    }

    pub fn smoothed_block(ei: f64, es: f64, kernel_radius: f64, cell_size: f64, seed: u64) -> Self {
        PotentialSpec {
            kind: PotentialKind::SmoothedBlock,
            ei,
            es,
            a: None,
            epsilon: default_epsilon(),
            kernel_radius,
            cell_size,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PotentialSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn with_cell_size(&self, cell_size: f64) -> Self {
        PotentialSpec {
            cell_size,
            ..self.clone()
        }
    }

    /// Bump height es − ei.
    pub fn amplitude(&self) -> f64 {
        self.es - self.ei
    }

    pub fn is_constant(&self) -> bool {
        self.kind == PotentialKind::Constant
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if !(self.ei.is_finite() && self.es.is_finite()) || self.ei <= 0.0 {
            return bad(format!("ei must be positive and finite, got {}", self.ei));
        }
        if self.es < self.ei {
            return bad(format!("es = {} below ei = {}", self.es, self.ei));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad(format!("cell_size must be positive, got {}", self.cell_size));
        }
        match self.kind {
            PotentialKind::Constant => {}
            PotentialKind::SmoothedBlock => {
                if self.kernel_radius < self.cell_size {
                    return bad(format!(
                        "kernel_radius {} smaller than cell_size {}",
                        self.kernel_radius, self.cell_size
                    ));
                }
            }
            PotentialKind::MaternBump => {
                if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
                    return bad(format!("epsilon must lie in (0,1), got {}", self.epsilon));
                }
                if self.es <= self.ei {
                    return bad("matern_bump needs a = es - ei > 0".into());
                }
                if let Some(a) = self.a {
                    if (a - self.amplitude()).abs() > 1e-12 * self.es.max(1.0) {
                        return bad(format!("a = {} but es - ei = {}", a, self.amplitude()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Distance beyond which two evaluations share no random input.
    pub fn dependence_range(&self) -> f64 {
        match self.kind {
            PotentialKind::Constant => 0.0,
            PotentialKind::SmoothedBlock => 2.0 * self.kernel_radius,
            PotentialKind::MaternBump => {
                self.epsilon + 2.0 + 6.0 * self.cell_size
            }
        }
    }
}

/// Smooth bump with support [-1/2, 1/2] and peak 1.
pub fn bump(u: f64) -> f64 {
    let s = 1.0 - 4.0 * u * u;
    if s <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / s).exp()
    }
}

/// φ(x/ε).
pub fn mollifier_value(x: f64, eps: f64) -> f64 {
    bump(x / eps)
}

fn bump_derivative(u: f64) -> f64 {
    let s = 1.0 - 4.0 * u * u;
    if s <= 0.0 {
        0.0
    } else {
        -bump(u) * 8.0 * u / (s * s)
    }
}

/// sup |φ'| on a fine grid.
pub fn bump_max_slope() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| {
        let n = 200_000;
        (0..=n)
            .map(|i| bump_derivative(-0.5 + i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
            * (1.0 + 1e-6)
    })
}

/// Kernel (1 − (r/R)²)³ of the block field.
fn block_kernel(r: f64, radius: f64) -> f64 {
    let q = r / radius;
    let s = 1.0 - q * q;
    if s <= 0.0 {
        0.0
    } else {
        s * s * s
    }
}

/// Simultaneous deletion: keep points whose nearest other point is farther than 1.
/// Input must be sorted.
pub fn matern_thin(raw: &[f64]) -> Vec<f64> {
    let n = raw.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || raw[i] - raw[i - 1] > 1.0;
            let right = i + 1 == n || raw[i + 1] - raw[i] > 1.0;
            left && right
        })
        .map(|i| raw[i])
        .collect()
}

struct Inner {
    spec: PotentialSpec,
    grid_offset: f64,
    cache: RwLock<HashMap<i64, Arc<[f64]>>>,
}

/// An evaluable realization of ξ. Clones and shifts share the cell memo.
#[derive(Clone)]
pub struct PotentialField {
    inner: Arc<Inner>,
    shift: f64,
}

impl std::fmt::Debug for PotentialField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PotentialField")
            .field("spec", &self.inner.spec)
            .field("shift", &self.shift)
            .finish()
    }
}

impl PotentialField {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        spec.validate()?;
        let grid_offset = match spec.kind {
            PotentialKind::SmoothedBlock => {
                let mut rng = stream_rng(spec.seed, OFFSET_STREAM);
                spec.cell_size * rng.random::<f64>()
            }
            _ => 0.0,
        };
        Ok(PotentialField {
            inner: Arc::new(Inner {
                spec,
                grid_offset,
                cache: RwLock::new(HashMap::new()),
            }),
            shift: 0.0,
        })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.inner.spec
    }

    pub fn shift_offset(&self) -> f64 {
        self.shift
    }

    pub fn es(&self) -> f64 {
        self.inner.spec.es
    }

    pub fn ei(&self) -> f64 {
        self.inner.spec.ei
    }

    /// θ_h: the field x ↦ ξ(x + h).
    pub fn shift(&self, h: f64) -> PotentialField {
        PotentialField {
            inner: Arc::clone(&self.inner),
            shift: self.shift + h,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let xe = x + self.shift;
        let s = &self.inner.spec;
        match s.kind {
            PotentialKind::Constant => s.ei,
            PotentialKind::SmoothedBlock => self.block_value(xe, |k| self.cell(k)[0]),
            PotentialKind::MaternBump => {
                let h = s.cell_size;
                let (k0, k1) = cell_span(xe - 0.5 * s.epsilon, xe + 0.5 * s.epsilon, h);
                let cells: Vec<Arc<[f64]>> = (k0..=k1).map(|k| self.cell(k)).collect();
                self.bump_value(xe, cells.iter().flat_map(|c| c.iter().copied()))
            }
        }
    }

    pub fn evaluate_zeta(&self, x: f64) -> f64 {
        self.evaluate(x) - self.inner.spec.es
    }

    /// Element i is `evaluate(x0 + i·dx)`.
    pub fn sample_grid(&self, x0: f64, dx: f64, n: usize) -> Vec<f64> {
        self.sample_with(n, |i| x0 + i as f64 * dx)
    }

    /// Values at the lattice nodes `(first + i)·dx`.
    pub fn sample_nodes(&self, first: i64, dx: f64, n: usize) -> Vec<f64> {
        self.sample_with(n, |i| (first + i as i64) as f64 * dx)
    }

    /// Batch evaluation at increasing positions; bit-identical to `evaluate`.
    pub fn sample_with<F: Fn(usize) -> f64>(&self, n: usize, pos: F) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        let s = &self.inner.spec;
        match s.kind {
            PotentialKind::Constant => vec![s.ei; n],
            PotentialKind::SmoothedBlock => {
                let (k0, _) = self.block_cells(pos(0) + self.shift);
                let (_, k1) = self.block_cells(pos(n - 1) + self.shift);
                let coef: Vec<f64> = (k0..=k1).map(|k| self.cell(k)[0]).collect();
                (0..n)
                    .map(|i| {
                        let xe = pos(i) + self.shift;
                        self.block_value(xe, |k| coef[(k - k0) as usize])
                    })
                    .collect()
            }
            PotentialKind::MaternBump => {
                let half = 0.5 * s.epsilon;
                let lo = pos(0) + self.shift;
                let hi = pos(n - 1) + self.shift;
                let (k0, k1) = cell_span(lo - half, hi + half, s.cell_size);
                let mut pts: Vec<f64> = Vec::new();
                for k in k0..=k1 {
                    pts.extend(self.cell(k).iter().copied());
                }
                let mut start = 0usize;
                (0..n)
                    .map(|i| {
                        let xe = pos(i) + self.shift;
                        while start < pts.len() && pts[start] <= xe - half {
                            start += 1;
                        }
                        let mut end = start;
                        while end < pts.len() && pts[end] < xe + half {
                            end += 1;
                        }
                        self.bump_value(xe, pts[start..end].iter().copied())
                    })
                    .collect()
            }
        }
    }

    /// Raw cells whose random draws can influence `evaluate(x)`.
    pub fn dependency_cells(&self, x: f64) -> Vec<i64> {
        let xe = x + self.shift;
        let s = &self.inner.spec;
        match s.kind {
            PotentialKind::Constant => Vec::new(),
            PotentialKind::SmoothedBlock => {
                let (k0, k1) = self.block_cells(xe);
                (k0..=k1).collect()
            }
            PotentialKind::MaternBump => {
                let h = s.cell_size;
                let (k0, k1) = cell_span(xe - 0.5 * s.epsilon, xe + 0.5 * s.epsilon, h);
                let r = thinning_reach(h);
                (k0 - r..=k1 + r).collect()
            }
        }
    }

    /// Sup of |ξ'| implied by the construction.
    pub fn lipschitz_bound(&self) -> f64 {
        let s = &self.inner.spec;
        match s.kind {
            PotentialKind::Constant => 0.0,
            PotentialKind::MaternBump => s.amplitude() * bump_max_slope() / s.epsilon,
            PotentialKind::SmoothedBlock => {
                let r = s.kernel_radius;
                let c = s.cell_size;
                // |K'(r)| = 6 r/R² (1 − r²/R²)², maximal at r = R/√5.
                let q2: f64 = 0.2;
                let kmax = 6.0 * q2.sqrt() / r * (1.0 - q2).powi(2);
                let terms = (2.0 * r / c).ceil() + 1.0;
                let min_mass = block_kernel(0.5 * c, r);
                s.amplitude() * terms * kmax / min_mass
            }
        }
    }

    fn block_cells(&self, xe: f64) -> (i64, i64) {
        let s = &self.inner.spec;
        let c = s.cell_size;
        let r = s.kernel_radius;
        let o = self.inner.grid_offset;
        let k0 = ((xe - r - o) / c - 0.5).floor() as i64;
        let k1 = ((xe + r - o) / c - 0.5).ceil() as i64;
        (k0, k1)
    }

    fn block_value<C: Fn(i64) -> f64>(&self, xe: f64, coef: C) -> f64 {
        let s = &self.inner.spec;
        let c = s.cell_size;
        let o = self.inner.grid_offset;
        let (k0, k1) = self.block_cells(xe);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in k0..=k1 {
            let centre = o + (k as f64 + 0.5) * c;
            let w = block_kernel(xe - centre, s.kernel_radius);
            if w > 0.0 {
                num += coef(k) * w;
                den += w;
            }
        }
        (s.ei + s.amplitude() * (num / den)).clamp(s.ei, s.es)
    }

    fn bump_value<I: Iterator<Item = f64>>(&self, xe: f64, candidates: I) -> f64 {
        let s = &self.inner.spec;
        let half = 0.5 * s.epsilon;
        let mut hit: Option<f64> = None;
        for p in candidates {
            if (xe - p).abs() < half {
                assert!(hit.is_none(), "overlapping bump supports near x = {xe}");
                hit = Some(mollifier_value(xe - p, s.epsilon));
            }
        }
        match hit {
            None => s.ei,
            Some(phi) => (s.es - s.amplitude() * (1.0 - phi)).max(s.ei),
        }
    }

    fn cell(&self, k: i64) -> Arc<[f64]> {
        if let Some(c) = self.inner.cache.read().get(&k) {
            return Arc::clone(c);
        }
        let data: Arc<[f64]> = match self.inner.spec.kind {
            PotentialKind::SmoothedBlock => {
                let mut rng = stream_rng(self.inner.spec.seed, cell_stream(k));
                Arc::from(vec![rng.random::<f64>()])
            }
            PotentialKind::MaternBump => Arc::from(retained_in_cell(&self.inner.spec, k)),
            PotentialKind::Constant => Arc::from(Vec::new()),
        };
        let mut w = self.inner.cache.write();
        if w.len() > CACHE_LIMIT {
            w.clear();
        }
        Arc::clone(w.entry(k).or_insert(data))
    }
}

fn cell_span(lo: f64, hi: f64, h: f64) -> (i64, i64) {
    ((lo / h).floor() as i64, (hi / h).floor() as i64)
}

/// Number of neighbouring raw cells consulted on each side when thinning.
fn thinning_reach(h: f64) -> i64 {
    (1.0 / h).ceil() as i64 + 1
}

/// Unit-rate Poisson points generated for cell k, sorted.
fn raw_cell(spec: &PotentialSpec, k: i64) -> Vec<f64> {
    let h = spec.cell_size;
    let mut rng = stream_rng(spec.seed, cell_stream(k));
    let n = Poisson::new(h).expect("positive mean").sample(&mut rng) as usize;
    let base = k as f64 * h;
    let mut pts: Vec<f64> = (0..n).map(|_| base + h * rng.random::<f64>()).collect();
    pts.sort_by(f64::total_cmp);
    pts
}

fn retained_in_cell(spec: &PotentialSpec, k: i64) -> Vec<f64> {
    let own = raw_cell(spec, k);
    if own.is_empty() {
        return own;
    }
    let r = thinning_reach(spec.cell_size);
    let mut around: Vec<f64> = Vec::new();
    for j in k - r..=k + r {
        if j == k {
            around.extend(own.iter().copied());
        } else {
            around.extend(raw_cell(spec, j));
        }
    }
    around.sort_by(f64::total_cmp);
    let kept = matern_thin(&around);
    own.into_iter()
        .filter(|p| kept.binary_search_by(|q| q.total_cmp(p)).is_ok())
        .collect()
}

/// Raw Poisson points of the seed in [lo, hi], sorted.
pub fn raw_points(spec: &PotentialSpec, lo: f64, hi: f64) -> Vec<f64> {
    let (k0, k1) = cell_span(lo, hi, spec.cell_size);
    let mut v: Vec<f64> = Vec::new();
    for k in k0..=k1 {
        v.extend(raw_cell(spec, k).into_iter().filter(|&p| p >= lo && p <= hi));
    }
    v
}

/// Retained Matérn points in [lo, hi]; thinning sees raw points beyond the window.
pub fn matern_points(spec: &PotentialSpec, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if spec.kind != PotentialKind::MaternBump {
        return Err(Error::Spec("matern_points needs a matern_bump spec".into()));
    }
    spec.validate()?;
    let (k0, k1) = cell_span(lo, hi, spec.cell_size);
    let mut v: Vec<f64> = Vec::new();
    for k in k0..=k1 {
        v.extend(
            retained_in_cell(spec, k)
                .into_iter()
                .filter(|&p| p >= lo && p <= hi),
        );
    }
    Ok(v)
}

/// Two-column CSV `x,xi` of a sampled grid.
pub fn grid_csv(field: &PotentialField, x0: f64, dx: f64, n: usize) -> String {
    let vals = field.sample_grid(x0, dx, n);
    let mut out = String::from("x,xi\n");
    for (i, v) in vals.iter().enumerate() {
        out.push_str(&format!("{},{}\n", x0 + i as f64 * dx, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matern() -> PotentialField {
        PotentialField::new(PotentialSpec::matern_bump(0.5, 2.0, 0.5, 11)).unwrap()
    }

    #[test]
    fn constant_is_flat() {
        let f = PotentialField::new(PotentialSpec::constant(1.0)).unwrap();
        assert_eq!(f.evaluate(-3.7), 1.0);
        assert_eq!(f.evaluate_zeta(12.0), 0.0);
        assert!(f.sample_grid(0.0, 0.1, 10).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mollifier_shape() {
        assert_eq!(mollifier_value(0.0, 0.3), 1.0);
        assert_eq!(mollifier_value(0.6 * 0.3, 0.3), 0.0);
        assert_eq!(mollifier_value(-0.1, 1.0), mollifier_value(0.1, 1.0));
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = mollifier_value(-0.5 + 0.005 * i as f64, 1.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn thinning_rule() {
        assert_eq!(matern_thin(&[0.0, 0.4, 3.0]), vec![3.0]);
        assert_eq!(matern_thin(&[0.0, 2.0, 4.0]), vec![0.0, 2.0, 4.0]);
        assert_eq!(matern_thin(&[0.0, 1.0]), Vec::<f64>::new());
    }

    #[test]
    fn bump_peaks_and_floor() {
        let f = matern();
        let pts = matern_points(f.spec(), 0.0, 200.0).unwrap();
        assert!(!pts.is_empty());
        for w in pts.windows(2) {
            assert!(w[1] - w[0] > 1.0);
        }
        for &p in &pts {
            assert_eq!(f.evaluate(p), 2.5);
        }
        // far from every retained point
        let x = (100..1900)
            .map(|i| i as f64 * 0.1)
            .find(|x| pts.iter().all(|p| (x - p).abs() > 0.3))
            .unwrap();
        assert_eq!(f.evaluate(x), 0.5);
        assert_eq!(f.evaluate_zeta(x), -2.0);
    }

    #[test]
    fn grid_matches_pointwise() {
        for spec in [
            PotentialSpec::matern_bump(0.5, 2.0, 0.5, 3),
            PotentialSpec::smoothed_block(1.0, 3.0, 2.0, 1.5, 3),
        ] {
            let f = PotentialField::new(spec).unwrap();
            let g = f.sample_grid(-7.3, 0.013, 3000);
            for (i, v) in g.iter().enumerate() {
                assert_eq!(*v, f.evaluate(-7.3 + i as f64 * 0.013));
            }
            let s = f.shift(2.5);
            assert_eq!(s.evaluate(0.0), f.evaluate(2.5));
            assert_eq!(f.sample_grid(1.0, 0.5, 1)[0], f.evaluate(1.0));
        }
    }

    #[test]
    fn fresh_field_matches_warm_cache() {
        let f = matern();
        let xs: Vec<f64> = (0..500).map(|i| 97.0 - i as f64 * 0.37).collect();
        let a: Vec<f64> = xs.iter().map(|&x| f.evaluate(x)).collect();
        let g = matern();
        let b: Vec<f64> = xs.iter().rev().map(|&x| g.evaluate(x)).collect();
        let b: Vec<f64> = b.into_iter().rev().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        assert!(PotentialSpec::matern_bump(0.5, 2.0, 1.2, 0).validate().is_err());
        assert!(PotentialSpec::smoothed_block(1.0, 2.0, 0.5, 1.0, 0).validate().is_err());
        let mut s = PotentialSpec::matern_bump(0.5, 2.0, 0.5, 0);
        s.a = Some(1.0);
        assert!(s.validate().is_err());
        assert!(PotentialSpec::constant(0.0).validate().is_err());
    }
}
