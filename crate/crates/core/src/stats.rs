//! Small statistics toolkit: means with standard errors, goodness-of-fit tests
//! against N(0,1), least squares and binomial intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Estimate with standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Estimate { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// |value − target| in units of SE (∞ when SE is 0 and they differ).
    pub fn z_against(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }

    /// Agreement within k combined standard errors.
    pub fn agrees(&self, other: &Estimate, k: f64) -> bool {
        let s = (self.se * self.se + other.se * other.se).sqrt();
        (self.value - other.value).abs() <= k * s
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn mean_se(xs: &[f64]) -> Estimate {
    let m = mean(xs);
    if xs.len() < 2 {
        return Estimate { value: m, se: f64::NAN };
    }
    Estimate {
        value: m,
        se: (variance(xs) / xs.len() as f64).sqrt(),
    }
}

/// Standard error of the sample variance under approximate normality.
pub fn variance_se(xs: &[f64]) -> Estimate {
    let v = variance(xs);
    Estimate {
        value: v,
        se: v * (2.0 / (xs.len() as f64 - 1.0)).sqrt(),
    }
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Empirical quantile with linear interpolation (type 7).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (h - i as f64) * (v[i + 1] - v[i])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Kolmogorov survival function Q(λ) = 2Σ(−1)^{k−1}e^{−2k²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> TestResult {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    TestResult {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
    }
}

pub fn ks_normal(xs: &[f64]) -> TestResult {
    let nd = std_normal();
    ks_test(xs, |x| nd.cdf(x))
}

/// KS test of `xs` against N(mu, var).
pub fn ks_gaussian(xs: &[f64], mu: f64, var: f64) -> TestResult {
    let nd = std_normal();
    let s = var.sqrt();
    ks_test(xs, |x| nd.cdf((x - mu) / s))
}

fn ad_inf_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

/// Anderson–Darling test against the fully specified N(0,1).
pub fn anderson_darling_normal(xs: &[f64]) -> TestResult {
    let nd = std_normal();
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let fi = nd.cdf(v[i]).clamp(1e-300, 1.0 - 1e-16);
        let fj = nd.cdf(v[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        s += (2.0 * i as f64 + 1.0) * (fi.ln() + (1.0 - fj).ln());
    }
    let a2 = -nf - s / nf;
    TestResult {
        statistic: a2,
        p_value: (1.0 - ad_inf_cdf(a2)).clamp(0.0, 1.0),
    }
}

/// Ordinary least squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub residual_sd: f64,
    pub n: usize,
}

/// Least squares of y on the given columns (add a column of ones for an intercept).
pub fn ols(columns: &[Vec<f64>], y: &[f64]) -> Option<Regression> {
    let p = columns.len();
    let n = y.len();
    if n <= p || columns.iter().any(|c| c.len() != n) {
        return None;
    }
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for a in 0..p {
        for b in 0..p {
            xtx[a][b] = (0..n).map(|i| columns[a][i] * columns[b][i]).sum();
        }
        xty[a] = (0..n).map(|i| columns[a][i] * y[i]).sum();
    }
    let inv = invert(&xtx)?;
    let coef: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let rss: f64 = (0..n)
        .map(|i| {
            let f: f64 = (0..p).map(|a| coef[a] * columns[a][i]).sum();
            (y[i] - f) * (y[i] - f)
        })
        .sum();
    let s2 = rss / (n - p) as f64;
    let se = (0..p).map(|a| (s2 * inv[a][a]).max(0.0).sqrt()).collect();
    Some(Regression {
        coef,
        se,
        residual_sd: s2.sqrt(),
        n,
    })
}

/// Fit y ≈ c₀ + c₁x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<Regression> {
    ols(&[vec![1.0; x.len()], x.to_vec()], y)
}

fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        inv.swap(c, piv);
        let d = a[c][c];
        for j in 0..p {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for j in 0..p {
                        a[r][j] -= f * a[c][j];
                        inv[r][j] -= f * inv[c][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Proportion with a standard error read off the 68% Wilson interval.
pub fn wilson(successes: usize, n: usize) -> Estimate {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z = 1.0;
    let den = 1.0 + z * z / nf;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    Estimate { value: p, se: half }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_recovers_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 - 0.5 * x + if (*x as i32) % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let r = linear_fit(&x, &y).unwrap();
        assert!((r.coef[0] - 2.0).abs() < 0.02 && (r.coef[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn ks_and_ad_on_normal_quantiles() {
        let nd = std_normal();
        let xs: Vec<f64> = (0..200).map(|i| nd.inverse_cdf((i as f64 + 0.5) / 200.0)).collect();
        assert!(ks_normal(&xs).p_value > 0.99);
        assert!(anderson_darling_normal(&xs).p_value > 0.9);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(ks_normal(&shifted).p_value < 1e-6);
        assert!(anderson_darling_normal(&shifted).p_value < 1e-3);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
    }

    #[test]
    fn wilson_is_sane() {
        let e = wilson(50, 100);
        assert!((e.value - 0.5).abs() < 1e-15 && (e.se - 0.05).abs() < 1e-3);
        assert!(wilson(0, 100).se > 0.0);
    }
}
