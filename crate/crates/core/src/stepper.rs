//! Compact fourth-order (Numerov) Crank–Nicolson stepper for
//! `df/ds = alpha f'' + c(x) f + g(x)` on a uniform grid.
//!
//! The second derivative is the compact approximation `M^{-1} D2`, with
//! `M = I + dx^2/12 D2`. Multiplying through by `M` keeps every system
//! tridiagonal.

use num_complex::Complex64;

use crate::grid::Boundary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Edge {
    /// Boundary nodes held at zero.
    Dirichlet,
    /// Reflecting ghost nodes (zero flux).
    Reflect,
}

impl From<Boundary> for Edge {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::DirichletZero => Edge::Dirichlet,
            Boundary::ClampDrift => Edge::Reflect,
        }
    }
}

#[derive(Debug, Clone)]
struct Tridiag {
    lower: Vec<Complex64>,
    diag: Vec<Complex64>,
    upper: Vec<Complex64>,
}

impl Tridiag {
    fn mul(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = x.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }
}

/// Pre-factored Thomas solver.
#[derive(Debug, Clone)]
struct Factored {
    lower: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
    upper_scaled: Vec<Complex64>,
}

impl Factored {
    fn new(m: &Tridiag) -> Self {
        let n = m.diag.len();
        let mut inv_pivot = vec![Complex64::default(); n];
        let mut upper_scaled = vec![Complex64::default(); n];
        let mut pivot = m.diag[0];
        inv_pivot[0] = 1.0 / pivot;
        upper_scaled[0] = m.upper[0] * inv_pivot[0];
        for i in 1..n {
            pivot = m.diag[i] - m.lower[i] * upper_scaled[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            upper_scaled[i] = m.upper[i] * inv_pivot[i];
        }
        Self { lower: m.lower.clone(), inv_pivot, upper_scaled }
    }

    fn solve(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= self.upper_scaled[i] * next;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Stepper {
    edge: Edge,
    tau: f64,
    explicit: Tridiag,
    mass: Tridiag,
    implicit: Factored,
    scratch_len: usize,
}

impl Stepper {
    /// `alpha`: diffusion coefficient, `reaction[j]`: `c(x_j)`, `tau`: step.
    pub(crate) fn new(alpha: Complex64, reaction: &[Complex64], dx: f64, tau: f64, edge: Edge) -> Self {
        let n_all = reaction.len();
        let (offset, n) = match edge {
            Edge::Dirichlet => (1, n_all - 2),
            Edge::Reflect => (0, n_all),
        };
        let inv_dx2 = 1.0 / (dx * dx);
        let m_off = 1.0 / 12.0;
        let m_diag = 10.0 / 12.0;
        let zero = Complex64::default();
        let mut mass = Tridiag { lower: vec![zero; n], diag: vec![zero; n], upper: vec![zero; n] };
        // generator G = alpha D2 + M c
        let mut gen = mass.clone();
        for i in 0..n {
            let g = i + offset;
            mass.diag[i] = Complex64::new(m_diag, 0.0);
            gen.diag[i] = alpha * (-2.0 * inv_dx2) + reaction[g] * m_diag;
            if i > 0 {
                mass.lower[i] = Complex64::new(m_off, 0.0);
                gen.lower[i] = alpha * inv_dx2 + reaction[g - 1] * m_off;
            }
            if i + 1 < n {
                mass.upper[i] = Complex64::new(m_off, 0.0);
                gen.upper[i] = alpha * inv_dx2 + reaction[g + 1] * m_off;
            }
        }
        if edge == Edge::Reflect {
            // ghost f_{-1} = f_1 and f_N = f_{N-2}
            mass.upper[0] = Complex64::new(2.0 * m_off, 0.0);
            gen.upper[0] = alpha * (2.0 * inv_dx2) + reaction[1] * (2.0 * m_off);
            mass.lower[n - 1] = Complex64::new(2.0 * m_off, 0.0);
            gen.lower[n - 1] = alpha * (2.0 * inv_dx2) + reaction[n - 2] * (2.0 * m_off);
        }
        let h = 0.5 * tau;
        let combine = |sign: f64| Tridiag {
            lower: mass.lower.iter().zip(&gen.lower).map(|(m, g)| m + g * (sign * h)).collect(),
            diag: mass.diag.iter().zip(&gen.diag).map(|(m, g)| m + g * (sign * h)).collect(),
            upper: mass.upper.iter().zip(&gen.upper).map(|(m, g)| m + g * (sign * h)).collect(),
        };
        let explicit = combine(1.0);
        let implicit = Factored::new(&combine(-1.0));
        Self { edge, tau, explicit, mass, implicit, scratch_len: n }
    }

    fn range(&self, n_all: usize) -> std::ops::Range<usize> {
        match self.edge {
            Edge::Dirichlet => 1..n_all - 1,
            Edge::Reflect => 0..n_all,
        }
    }

    /// Advance `f` by one step; `source` is an explicit term `g` added as `tau * M g`.
    pub(crate) fn step(&self, f: &mut [Complex64], source: Option<&[Complex64]>) {
        let r = self.range(f.len());
        let mut rhs = vec![Complex64::default(); self.scratch_len];
        self.explicit.mul(&f[r.clone()], &mut rhs);
        if let Some(g) = source {
            let mut mg = vec![Complex64::default(); self.scratch_len];
            self.mass.mul(&g[r.clone()], &mut mg);
            for (a, b) in rhs.iter_mut().zip(&mg) {
                *a += b * self.tau;
            }
        }
        self.implicit.solve(&mut rhs);
        f[r.clone()].copy_from_slice(&rhs);
        if self.edge == Edge::Dirichlet {
            let n = f.len();
            f[0] = Complex64::default();
            f[n - 1] = Complex64::default();
        }
    }
}
