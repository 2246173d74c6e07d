//! Tridiagonal factorisation (Thomas algorithm) reused across time steps.

/// Pre-factored tridiagonal matrix with rows `lower[j]·x[j−1] + diag[j]·x[j] + upper[j]·x[j+1]`.
#[derive(Clone, Debug)]
pub struct Tridiag {
    lower: Vec<f64>,
    cprime: Vec<f64>,
    inv: Vec<f64>,
}

impl Tridiag {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(n > 0 && lower.len() == n && upper.len() == n);
        let mut cprime = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev_c = 0.0;
        for j in 0..n {
            let den = diag[j] - if j > 0 { lower[j] * prev_c } else { 0.0 };
            assert!(den != 0.0, "singular tridiagonal system at row {j}");
            inv[j] = 1.0 / den;
            cprime[j] = upper[j] * inv[j];
            prev_c = cprime[j];
        }
        Tridiag {
            lower: lower.to_vec(),
            cprime,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.inv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv.is_empty()
    }

    /// Solve in place; `d` holds the right-hand side on entry.
    pub fn solve(&self, d: &mut [f64]) {
        let n = self.inv.len();
        debug_assert_eq!(d.len(), n);
        d[0] *= self.inv[0];
        for j in 1..n {
            d[j] = (d[j] - self.lower[j] * d[j - 1]) * self.inv[j];
        }
        for j in (0..n - 1).rev() {
            d[j] -= self.cprime[j] * d[j + 1];
        }
    }
}

/// Constant-coefficient operator `A u_j = lo·u_{j−1} + di·u_j + up·u_{j+1}` on
/// nodes 0..n, with the node left of 0 and right of n−1 handled by the caller
/// through `left`/`right` boundary modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    /// Ghost node mirrors the first interior neighbour.
    Neumann,
    /// Ghost node carries a prescribed value.
    Dirichlet,
}

/// θ-scheme stepper for `M u_t = A u` with A as above. M is the identity, or
/// the compact mass matrix (1, 10, 1)/12 which makes a second-difference A
/// fourth-order accurate.
#[derive(Clone, Debug)]
pub struct ThetaStepper {
    n: usize,
    m_off: f64,
    lo: f64,
    di: f64,
    up: f64,
    left: Boundary,
    right: Boundary,
    theta: f64,
    dt: f64,
    fac: Tridiag,
}

impl ThetaStepper {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        lo: f64,
        di: f64,
        up: f64,
        left: Boundary,
        right: Boundary,
        theta: f64,
        dt: f64,
    ) -> Self {
        Self::with_mass(n, lo, di, up, left, right, theta, dt, 0.0)
    }

    /// Same as [`ThetaStepper::new`] with the compact mass matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn compact(
        n: usize,
        lo: f64,
        di: f64,
        up: f64,
        left: Boundary,
        right: Boundary,
        theta: f64,
        dt: f64,
    ) -> Self {
        Self::with_mass(n, lo, di, up, left, right, theta, dt, 1.0 / 12.0)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_mass(
        n: usize,
        lo: f64,
        di: f64,
        up: f64,
        left: Boundary,
        right: Boundary,
        theta: f64,
        dt: f64,
        m_off: f64,
    ) -> Self {
        let m_di = 1.0 - 2.0 * m_off;
        let mut l = vec![m_off - theta * dt * lo; n];
        let d = vec![m_di - theta * dt * di; n];
        let mut u = vec![m_off - theta * dt * up; n];
        l[0] = 0.0;
        u[n - 1] = 0.0;
        if left == Boundary::Neumann {
            u[0] = 2.0 * m_off - theta * dt * (lo + up);
        }
        if right == Boundary::Neumann {
            l[n - 1] = 2.0 * m_off - theta * dt * (lo + up);
        }
        let fac = Tridiag::new(&l, &d, &u);
        ThetaStepper {
            n,
            m_off,
            lo,
            di,
            up,
            left,
            right,
            theta,
            dt,
            fac,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `u` by one step. For Dirichlet sides, `(old, new)` ghost values.
    pub fn step(&self, u: &mut [f64], scratch: &mut Vec<f64>, gl: (f64, f64), gr: (f64, f64)) {
        let n = self.n;
        let e = (1.0 - self.theta) * self.dt;
        let (lo, di, up) = (self.lo, self.di, self.up);
        scratch.clear();
        scratch.resize(n, 0.0);
        let ghost_l = match self.left {
            Boundary::Neumann => u.get(1).copied().unwrap_or(u[0]),
            Boundary::Dirichlet => gl.0,
        };
        let ghost_r = match self.right {
            Boundary::Neumann => u[n.saturating_sub(2)],
            Boundary::Dirichlet => gr.0,
        };
        let m = self.m_off;
        let m_di = 1.0 - 2.0 * m;
        if e != 0.0 || m != 0.0 {
            for j in 0..n {
                let l = if j == 0 { ghost_l } else { u[j - 1] };
                let r = if j + 1 == n { ghost_r } else { u[j + 1] };
                scratch[j] = m * (l + r) + m_di * u[j] + e * (lo * l + di * u[j] + up * r);
            }
        } else {
            scratch.copy_from_slice(u);
        }
        let t = self.theta * self.dt;
        if self.left == Boundary::Dirichlet {
            scratch[0] += (t * lo - m) * gl.1;
        }
        if self.right == Boundary::Dirichlet {
            scratch[n - 1] += (t * up - m) * gr.1;
        }
        self.fac.solve(scratch);
        u.copy_from_slice(scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_random_system() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 3.0 + 0.2 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut d = vec![0.0; n];
        for j in 0..n {
            d[j] = diag[j] * x[j];
            if j > 0 {
                d[j] += lower[j] * x[j - 1];
            }
            if j + 1 < n {
                d[j] += upper[j] * x[j + 1];
            }
        }
        Tridiag::new(&lower, &diag, &upper).solve(&mut d);
        for j in 0..n {
            assert!((d[j] - x[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn neumann_conserves_mass() {
        // Heat equation with two Neumann ends conserves the trapezoid mass.
        let n = 50;
        let dx: f64 = 0.1;
        let c = 0.5 / (dx * dx);
        let s = ThetaStepper::new(n, c, -2.0 * c, c, Boundary::Neumann, Boundary::Neumann, 0.5, 0.01);
        let mut u: Vec<f64> = (0..n).map(|i| if i < 20 { 1.0 } else { 0.0 }).collect();
        let mass = |u: &[f64]| u.iter().sum::<f64>() - 0.5 * (u[0] + u[n - 1]);
        let m0 = mass(&u);
        let mut scratch = Vec::new();
        for _ in 0..100 {
            s.step(&mut u, &mut scratch, (0.0, 0.0), (0.0, 0.0));
        }
        assert!((mass(&u) - m0).abs() < 1e-10);
    }
}
