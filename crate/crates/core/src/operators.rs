//! Discrete forward, backward and bi-directional generators, the Hamiltonian,
//! and stencil residuals of the conjugation identities relating them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{kernel_k, EvolutionRecord, PhysConfig, RecordKind};
use crate::fields::{fields_from_psi, valid_interval, DriftFields, DENSITY_FLOOR};
use crate::grid::{gradient_slice, laplacian_slice, quad, ComplexField, GridSpec, Order};
use crate::report::ResidualReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// `b+·∇ + (σ²/2)Δ`
    LPlus,
    /// `b−·∇ − (σ²/2)Δ`
    LMinus,
    /// `v_q·∇ − (iσ²/2)Δ`
    Lb,
    /// `−(ħ²/2m)Δ + V`
    Hamiltonian,
    /// `∂t + L_b`
    DdtPlusLb,
    /// `∂t + (i/ħ)H`
    DdtPlusIHOverHbar,
}

impl OperatorKind {
    pub fn is_time_dependent(self) -> bool {
        matches!(self, OperatorKind::DdtPlusLb | OperatorKind::DdtPlusIHOverHbar)
    }
}

/// Operator kind with its coefficient fields on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorHandle {
    pub kind: OperatorKind,
    pub grid: GridSpec,
    pub cfg: PhysConfig,
    pub b_plus: Vec<f64>,
    pub b_minus: Vec<f64>,
    pub v_q: Vec<Complex64>,
    pub potential: Vec<f64>,
}

impl OperatorHandle {
    pub fn new(kind: OperatorKind, df: &DriftFields, cfg: &PhysConfig) -> Result<Self> {
        let n = df.nelson()?;
        Ok(Self {
            kind,
            grid: df.grid,
            cfg: cfg.clone(),
            b_plus: df.b_plus.clone(),
            b_minus: n.b_minus.clone(),
            v_q: n.v_q.clone(),
            potential: cfg.potential.sample(&df.grid)?,
        })
    }

    /// Hamiltonian only; drift coefficients are zero.
    pub fn hamiltonian(grid: GridSpec, cfg: &PhysConfig) -> Result<Self> {
        let n = grid.n_points;
        Ok(Self {
            kind: OperatorKind::Hamiltonian,
            grid,
            cfg: cfg.clone(),
            b_plus: vec![0.0; n],
            b_minus: vec![0.0; n],
            v_q: vec![Complex64::default(); n],
            potential: cfg.potential.sample(&grid)?,
        })
    }

    pub fn with_kind(&self, kind: OperatorKind) -> Self {
        Self { kind, ..self.clone() }
    }

    fn spatial(&self, f: &[Complex64]) -> Vec<Complex64> {
        let dx = self.grid.dx();
        let d1 = gradient_slice(f, dx, Order::Fourth);
        let d2 = laplacian_slice(f, dx, Order::Fourth);
        let s2 = self.cfg.sigma2();
        let i = Complex64::i();
        let hbar = self.cfg.hbar;
        (0..f.len())
            .map(|j| match self.kind {
                OperatorKind::LPlus => d1[j] * self.b_plus[j] + d2[j] * (0.5 * s2),
                OperatorKind::LMinus => d1[j] * self.b_minus[j] - d2[j] * (0.5 * s2),
                OperatorKind::Lb | OperatorKind::DdtPlusLb => self.v_q[j] * d1[j] - i * 0.5 * s2 * d2[j],
                OperatorKind::Hamiltonian => -0.5 * hbar * s2 * d2[j] + f[j] * self.potential[j],
                OperatorKind::DdtPlusIHOverHbar => i * (-0.5 * s2 * d2[j] + f[j] * (self.potential[j] / hbar)),
            })
            .collect()
    }
}

/// Largest `|f|` allowed beyond `L − 2`.
pub const SUPPORT_TAIL: f64 = 1e-12;

fn check_support(f: &ComplexField) -> Result<()> {
    let l = f.grid.half_width - 2.0;
    for (j, v) in f.values.iter().enumerate() {
        let x = f.grid.x(j);
        if x.abs() > l && v.norm() >= SUPPORT_TAIL {
            return Err(Error::Support(format!("|f({x})| = {:e} beyond |x| = {l}", v.norm())));
        }
    }
    Ok(())
}

/// Stencil application of a spatial operator (fourth-order stencils).
pub fn apply(op: &OperatorHandle, f: &ComplexField) -> Result<ComplexField> {
    if op.kind.is_time_dependent() {
        return Err(Error::InvalidParameter(format!("{:?} needs a time series; use apply_in_time", op.kind)));
    }
    op.grid.ensure_same(&f.grid)?;
    check_support(f)?;
    Ok(ComplexField { grid: f.grid, values: op.spatial(&f.values), time: f.time })
}

/// Five-point central time derivative.
fn d_dt5(series: &[&[Complex64]; 5], dt: f64, j: usize) -> Complex64 {
    (series[0][j] - series[1][j] * 8.0 + series[3][j] * 8.0 - series[4][j]) / (12.0 * dt)
}

/// `∂t + (spatial part)` at the middle of five equally spaced samples.
pub fn apply_in_time(op: &OperatorHandle, series: [&ComplexField; 5], dt: f64) -> Result<ComplexField> {
    if !op.kind.is_time_dependent() {
        return Err(Error::InvalidParameter(format!("{:?} is not time dependent", op.kind)));
    }
    for f in series {
        op.grid.ensure_same(&f.grid)?;
        check_support(f)?;
    }
    let mid = series[2];
    let space = op.spatial(&mid.values);
    let vals = [
        &series[0].values[..],
        &series[1].values[..],
        &series[2].values[..],
        &series[3].values[..],
        &series[4].values[..],
    ];
    let values = (0..mid.values.len()).map(|j| d_dt5(&vals, dt, j) + space[j]).collect();
    Ok(ComplexField { grid: mid.grid, values, time: mid.time })
}

/// Nodes with `|g|² ≥ 1e-8 max|g|²`, inside the valid (non-vanishing) interval.
fn guarded(grid: &GridSpec, g: &[Complex64]) -> Result<Vec<usize>> {
    let mag: Vec<f64> = g.iter().map(|v| v.norm()).collect();
    let (lo, hi) = valid_interval(grid, &mag, crate::evolve::VANISHING_RATIO)?;
    let max = mag.iter().cloned().fold(0.0, f64::max);
    Ok((lo..=hi).filter(|&j| mag[j] * mag[j] >= DENSITY_FLOOR * max * max).collect())
}

fn five(rec: &EvolutionRecord, k: usize) -> Result<[&ComplexField; 5]> {
    if k < 2 || k + 2 >= rec.len() {
        return Err(Error::OutOfSpan {
            t: rec.times[k.min(rec.len() - 1)],
            start: rec.times[2.min(rec.len() - 1)],
            end: rec.times[rec.len().saturating_sub(3)],
        });
    }
    Ok([&rec.fields[k - 2], &rec.fields[k - 1], &rec.fields[k], &rec.fields[k + 1], &rec.fields[k + 2]])
}

fn max_over(nodes: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    nodes.iter().map(|&j| f(j)).fold(0.0, f64::max)
}

/// `log g` with phase unwrapped along x from node `anchor`, whose phase is `anchor_phase`.
fn log_unwrapped(g: &[Complex64], (lo, hi): (usize, usize), anchor: usize, anchor_phase: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); g.len()];
    out[anchor] = Complex64::new(g[anchor].norm().ln(), anchor_phase);
    for j in anchor + 1..=hi {
        let step = (g[j] / g[j - 1]).arg();
        out[j] = Complex64::new(g[j].norm().ln(), out[j - 1].im + step);
    }
    for j in (lo..anchor).rev() {
        let step = (g[j] / g[j + 1]).arg();
        out[j] = Complex64::new(g[j].norm().ln(), out[j + 1].im + step);
    }
    out
}

/// `∇log g` from the unwrapped logarithm, fourth order, on `lo..=hi`.
fn grad_log(g: &[Complex64], grid: &GridSpec) -> Result<Vec<Complex64>> {
    let mag: Vec<f64> = g.iter().map(|v| v.norm()).collect();
    let (lo, hi) = valid_interval(grid, &mag, crate::evolve::VANISHING_RATIO)?;
    let logs = log_unwrapped(g, (lo, hi), lo, 0.0);
    let mut out = vec![Complex64::default(); g.len()];
    out[lo..=hi].copy_from_slice(&gradient_slice(&logs[lo..=hi], grid.dx(), Order::Fourth));
    Ok(out)
}

fn ensure_same_times(a: &EvolutionRecord, b: &EvolutionRecord) -> Result<()> {
    a.grid.ensure_same(&b.grid)?;
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12) {
        return Err(Error::GridMismatch("records have different time lattices".into()));
    }
    Ok(())
}

/// Log-amplitude residuals at record time `t` for `∂u/∂t = aΔu + bVu`.
///
/// Reports the worst of: pd2 for `φ = θ/u` (`∂tφ − 2a∇log u·∇φ − aΔφ`) and
/// pd1 for the product `uφ = θ`. The pd1 residual of `u` itself is noted.
pub fn lemma1_check(
    u_rec: &EvolutionRecord,
    theta_rec: &EvolutionRecord,
    a: Complex64,
    b: Complex64,
    t: f64,
) -> Result<ResidualReport> {
    ensure_same_times(u_rec, theta_rec)?;
    let k = u_rec.index_of(t)?;
    let grid = u_rec.grid;
    let dt = u_rec.dt();
    let dx = grid.dx();
    let us = five(u_rec, k)?;
    let ths = five(theta_rec, k)?;
    let nodes = guarded(&grid, &us[2].values)?;
    let v = u_rec.config.potential.sample(&grid)?;
    let ratio = |m: usize| -> Vec<Complex64> {
        us[m]
            .values
            .iter()
            .zip(&ths[m].values)
            .map(|(u, th)| if u.norm() > 0.0 { th / u } else { Complex64::default() })
            .collect()
    };
    let phis: Vec<Vec<Complex64>> = (0..5).map(ratio).collect();
    let phi_refs = [&phis[0][..], &phis[1][..], &phis[2][..], &phis[3][..], &phis[4][..]];
    let gl = grad_log(&us[2].values, &grid)?;
    let dphi = gradient_slice(&phis[2], dx, Order::Fourth);
    let lphi = laplacian_slice(&phis[2], dx, Order::Fourth);
    let pd2 = max_over(&nodes, |j| (d_dt5(&phi_refs, dt, j) - a * 2.0 * gl[j] * dphi[j] - a * lphi[j]).norm());

    let pd1 = |series: [&ComplexField; 5]| -> f64 {
        let refs = [
            &series[0].values[..],
            &series[1].values[..],
            &series[2].values[..],
            &series[3].values[..],
            &series[4].values[..],
        ];
        let lap = laplacian_slice(&series[2].values, dx, Order::Fourth);
        max_over(&nodes, |j| (d_dt5(&refs, dt, j) - a * lap[j] - b * v[j] * series[2].values[j]).norm())
    };
    let product = pd1(ths);
    let input = pd1(us);
    Ok(ResidualReport::new("lemma1", pd2.max(product), 1e-3, grid, Some(dt))
        .with_note(format!("pd2 residual of theta/u: {pd2:e}"))
        .with_note(format!("pd1 residual of u*phi: {product:e}"))
        .with_note(format!("pd1 residual of u (input): {input:e}")))
}

/// Smooth test function `bump(x) · poly(x) · e^{iωt}` with
/// `bump = exp(−1/(1 − ((x − c)/R)²))` on `|x − c| < R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub center: f64,
    pub radius: f64,
    /// Polynomial coefficients, lowest degree first.
    pub poly: Vec<f64>,
    pub omega: f64,
    pub amplitude: Complex64,
}

impl TestFunction {
    pub fn bump(center: f64, radius: f64) -> Self {
        Self { center, radius, poly: vec![1.0], omega: 0.0, amplitude: Complex64::new(1.0, 0.0) }
    }

    pub fn with_poly(mut self, poly: Vec<f64>) -> Self {
        self.poly = poly;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn scaled(mut self, c: Complex64) -> Self {
        self.amplitude *= c;
        self
    }

    pub fn eval(&self, x: f64, t: f64) -> Complex64 {
        let s = (x - self.center) / self.radius;
        if s.abs() >= 1.0 {
            return Complex64::default();
        }
        let bump = (-1.0 / (1.0 - s * s)).exp();
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
        self.amplitude * bump * p * Complex64::from_polar(1.0, self.omega * t)
    }

    pub fn sample(&self, grid: GridSpec, t: f64) -> ComplexField {
        ComplexField::from_fn(grid, t, |x| self.eval(x, t))
    }
}

/// Max over guarded nodes of `(∂t + L_b)f − ψ⁻¹(∂t + (i/ħ)H)(ψf)` at record time `t`.
pub fn theorem2_conjugation_check(rec: &EvolutionRecord, f: &TestFunction, t: f64) -> Result<ResidualReport> {
    if rec.kind != RecordKind::Schrodinger {
        return Err(Error::Precondition("expected a Schrödinger record".into()));
    }
    let k = rec.index_of(t)?;
    let grid = rec.grid;
    let dt = rec.dt();
    let psis = five(rec, k)?;
    let df = fields_from_psi(psis[2], &rec.config)?;
    let op = OperatorHandle::new(OperatorKind::DdtPlusLb, &df, &rec.config)?;
    let fs: Vec<ComplexField> = (0..5).map(|m| f.sample(grid, rec.times[k + m - 2])).collect();
    let lhs = apply_in_time(&op, [&fs[0], &fs[1], &fs[2], &fs[3], &fs[4]], dt)?;
    let prods: Vec<ComplexField> = (0..5).map(|m| psis[m].zip_with(&fs[m], |p, g| p * g)).collect::<Result<_>>()?;
    let h = op.with_kind(OperatorKind::DdtPlusIHOverHbar);
    let rhs = apply_in_time(&h, [&prods[0], &prods[1], &prods[2], &prods[3], &prods[4]], dt)?;
    let nodes = guarded(&grid, &psis[2].values)?;
    let worst = max_over(&nodes, |j| (lhs.values[j] - rhs.values[j] / psis[2].values[j]).norm());
    Ok(ResidualReport::new("theorem2_conjugation", worst, 1e-3, grid, Some(dt)))
}

/// Ground-state transform residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundStateReport {
    pub report: ResidualReport,
    pub energy: f64,
    pub rayleigh_residual: f64,
    /// `max|ψ0 (LHS − RHS)| / max|ψ0|`
    pub weighted_residual: f64,
    pub lhs_max: f64,
}

/// Rayleigh-quotient tolerance for accepting `ψ0` as an eigenstate.
pub const EIGEN_TOL: f64 = 1e-6;

/// `−(ħ²/m)(∇log ψ0·∇f + ½Δf)` against `ψ0⁻¹ H (ψ0 f)` with `V` shifted by
/// the Rayleigh quotient `E0`, so that `H ψ0 = 0`.
pub fn ground_state_transform_check(
    psi0: &ComplexField,
    cfg: &PhysConfig,
    f: &ComplexField,
) -> Result<GroundStateReport> {
    psi0.grid.ensure_same(&f.grid)?;
    let grid = psi0.grid;
    let h = OperatorHandle::hamiltonian(grid, cfg)?;
    let h_psi = apply(&h, psi0)?;
    let norm = psi0.norm_sqr();
    let energy = (quad(&psi0.zip_with(&h_psi, |p, hp| p.conj() * hp)?) / norm).re;
    let scale = psi0.max_abs();
    let rayleigh =
        h_psi.values.iter().zip(&psi0.values).map(|(hp, p)| (hp - p * energy).norm()).fold(0.0, f64::max) / scale;
    if !(rayleigh <= EIGEN_TOL) {
        return Err(Error::Precondition(format!("not an eigenstate: Rayleigh residual {rayleigh:e}")));
    }
    let shifted = PhysConfig { potential: cfg.potential.shifted(energy), ..cfg.clone() };
    let hs = OperatorHandle::hamiltonian(grid, &shifted)?;
    let rhs = apply(&hs, &psi0.zip_with(f, |p, g| p * g)?)?;
    let dx = grid.dx();
    let gl = grad_log(&psi0.values, &grid)?;
    let df = gradient_slice(&f.values, dx, Order::Fourth);
    let lf = laplacian_slice(&f.values, dx, Order::Fourth);
    let c = -cfg.hbar * cfg.sigma2();
    let nodes = guarded(&grid, &psi0.values)?;
    let diff = |j: usize| c * (gl[j] * df[j] + lf[j] * 0.5) - rhs.values[j] / psi0.values[j];
    let plain = max_over(&nodes, |j| diff(j).norm());
    let weighted = max_over(&nodes, |j| (diff(j) * psi0.values[j]).norm()) / scale;
    let lhs_max = max_over(&nodes, |j| (c * (gl[j] * df[j] + lf[j] * 0.5)).norm());
    let report = ResidualReport::new("ground_state_transform", plain, 1e-3, grid, None)
        .with_note(format!("potential shifted by E0 = {energy:.12}"))
        .with_note(format!("psi0-weighted residual {weighted:e}"));
    Ok(GroundStateReport { report, energy, rayleigh_residual: rayleigh, weighted_residual: weighted, lhs_max })
}

/// Residuals of the θ = log(ψ2/ψ) equation and of the ratio equation (CWF).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjReport {
    pub theta: ResidualReport,
    pub ratio: ResidualReport,
}

/// `∂tθ + v_q·∇θ − (iħ/2m)Δθ − (iħ/2m)∇θ·∇θ` and
/// `∂tφ̃ + v_q·∇φ̃ − (iħ/2m)Δφ̃` for `φ̃ = ψ2/ψ`, at record time `t`.
pub fn hj_theta_check(rec1: &EvolutionRecord, rec2: &EvolutionRecord, t: f64) -> Result<HjReport> {
    ensure_same_times(rec1, rec2)?;
    let k = rec1.index_of(t)?;
    let grid = rec1.grid;
    let dt = rec1.dt();
    let dx = grid.dx();
    let p1 = five(rec1, k)?;
    let p2 = five(rec2, k)?;
    let ratios: Vec<Vec<Complex64>> = (0..5)
        .map(|m| {
            p1[m]
                .values
                .iter()
                .zip(&p2[m].values)
                .map(|(a, b)| if a.norm() > 0.0 { b / a } else { Complex64::default() })
                .collect()
        })
        .collect();
    let n1 = guarded(&grid, &p1[2].values)?;
    let n2: std::collections::HashSet<usize> = guarded(&grid, &p2[2].values)?.into_iter().collect();
    let nodes: Vec<usize> = n1.into_iter().filter(|j| n2.contains(j)).collect();
    if nodes.len() < 8 {
        return Err(Error::Vanishing { x: grid.x(rec1.grid.nearest_index(0.0)), magnitude: 0.0 });
    }
    let (lo, hi) = (nodes[0], *nodes.last().unwrap());
    if nodes.len() != hi - lo + 1 {
        let gap = (lo..=hi).find(|j| !nodes.contains(j)).unwrap();
        return Err(Error::Vanishing { x: grid.x(gap), magnitude: ratios[2][gap].norm() });
    }
    // unwrap each time slice from the middle node, with that node's phase unwrapped in time
    let anchor = (lo + hi) / 2;
    let base = ratios[2][anchor].arg();
    let thetas: Vec<Vec<Complex64>> = (0..5)
        .map(|m| {
            let a = base + (ratios[m][anchor] / ratios[2][anchor]).arg();
            log_unwrapped(&ratios[m], (lo, hi), anchor, a)
        })
        .collect();
    let th_refs =
        [&thetas[0][lo..=hi], &thetas[1][lo..=hi], &thetas[2][lo..=hi], &thetas[3][lo..=hi], &thetas[4][lo..=hi]];
    let r_refs =
        [&ratios[0][lo..=hi], &ratios[1][lo..=hi], &ratios[2][lo..=hi], &ratios[3][lo..=hi], &ratios[4][lo..=hi]];
    let df = fields_from_psi(p1[2], &rec1.config)?;
    let vq = &df.nelson()?.v_q;
    let ia = Complex64::new(0.0, 0.5 * rec1.config.sigma2());
    let dth = gradient_slice(th_refs[2], dx, Order::Fourth);
    let lth = laplacian_slice(th_refs[2], dx, Order::Fourth);
    let dr = gradient_slice(r_refs[2], dx, Order::Fourth);
    let lr = laplacian_slice(r_refs[2], dx, Order::Fourth);
    let inner: Vec<usize> = (0..=hi - lo).collect();
    let theta = max_over(&inner, |j| {
        (d_dt5(&th_refs, dt, j) + vq[lo + j] * dth[j] - ia * lth[j] - ia * dth[j] * dth[j]).norm()
    });
    let ratio = max_over(&inner, |j| (d_dt5(&r_refs, dt, j) + vq[lo + j] * dr[j] - ia * lr[j]).norm());
    Ok(HjReport {
        theta: ResidualReport::new("hj_theta", theta, 1e-3, grid, Some(dt)),
        ratio: ResidualReport::new("ratio_equation", ratio, 1e-3, grid, Some(dt)),
    })
}

/// Pointwise residual of `(∂t + v_q·∇ − (iħ/2m)Δ) p_q` in `(t, x)` for
/// `p_q(t0, y, t, x)`, normalized by the sum of the magnitudes of the three
/// terms, max over `|x| ≤ x_max` (guarded nodes only). Free records only.
pub fn kernel_pq_bdg_check(rec: &EvolutionRecord, t0: f64, y: f64, t: f64, x_max: f64) -> Result<ResidualReport> {
    if !rec.config.potential.is_zero() {
        return Err(Error::Precondition("the BDG kernel check needs V = 0".into()));
    }
    let k = rec.index_of(t)?;
    let grid = rec.grid;
    let dt = rec.dt();
    let dx = grid.dx();
    let psis = five(rec, k)?;
    let psi0 = crate::grid::interp(rec.at(t0)?, y)?;
    let pq = |m: usize| -> Result<Vec<Complex64>> {
        let tm = rec.times[k + m - 2];
        (0..grid.n_points)
            .map(|j| {
                let p = psis[m].values[j];
                if p.norm() == 0.0 {
                    return Ok(Complex64::default());
                }
                Ok(kernel_k(t0, y, tm, grid.x(j), &rec.config)? * psi0 / p)
            })
            .collect()
    };
    let series: Vec<Vec<Complex64>> = (0..5).map(pq).collect::<Result<_>>()?;
    let refs = [&series[0][..], &series[1][..], &series[2][..], &series[3][..], &series[4][..]];
    let df = fields_from_psi(psis[2], &rec.config)?;
    let vq = &df.nelson()?.v_q;
    let ia = Complex64::new(0.0, 0.5 * rec.config.sigma2());
    let d1 = gradient_slice(&series[2], dx, Order::Fourth);
    let d2 = laplacian_slice(&series[2], dx, Order::Fourth);
    let nodes: Vec<usize> =
        guarded(&grid, &psis[2].values)?.into_iter().filter(|&j| grid.x(j).abs() <= x_max).collect();
    let worst = max_over(&nodes, |j| {
        let (a, b, c) = (d_dt5(&refs, dt, j), vq[j] * d1[j], ia * d2[j]);
        (a + b - c).norm() / (a.norm() + b.norm() + c.norm())
    });
    Ok(ResidualReport::new("kernel_pq_bdg", worst, 1e-3, grid, Some(dt))
        .with_note("pointwise residual relative to the sum of term magnitudes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{heat_terminal_solve, schrodinger_evolve, Potential};
    use crate::grid::Boundary;
    use crate::states::{Coherent, FreePacket};
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::standard(Boundary::DirichletZero)
    }

    fn harmonic() -> PhysConfig {
        PhysConfig::natural(Potential::harmonic(1.0))
    }

    fn ground_psi() -> ComplexField {
        ComplexField::from_fn(grid(), 0.0, |x| Coherent::ground().psi(x, 0.0))
    }

    fn ground_ops() -> OperatorHandle {
        let df = fields_from_psi(&ground_psi(), &harmonic()).unwrap();
        OperatorHandle::new(OperatorKind::Lb, &df, &harmonic()).unwrap()
    }

    fn record(state: impl Fn(f64, f64) -> Complex64, t1: f64) -> EvolutionRecord {
        let psi = ComplexField::from_fn(grid(), 0.0, |x| state(x, 0.0));
        schrodinger_evolve(&psi, &harmonic(), t1).unwrap()
    }

    #[test]
    fn lb_on_gaussian_matches_symbolic() {
        let op = ground_ops();
        let f = ComplexField::from_real(grid(), 0.0, |x| (-x * x).exp());
        let out = apply(&op, &f).unwrap();
        let i = Complex64::i();
        for (j, v) in out.values.iter().enumerate() {
            let x = grid().x(j);
            let e = (-x * x).exp();
            let want = i * x * (-2.0 * x * e) - i * 0.5 * (4.0 * x * x - 2.0) * e;
            assert!((v - want).norm() <= 1e-6, "x = {x}");
        }
    }

    #[test]
    fn hamiltonian_ground_eigenvalue() {
        let h = OperatorHandle::hamiltonian(grid(), &harmonic()).unwrap();
        let psi = ground_psi();
        let out = apply(&h, &psi).unwrap();
        for (a, b) in out.values.iter().zip(&psi.values) {
            assert!((a - b * 0.5).norm() <= 1e-6);
        }
    }

    #[test]
    fn zero_in_zero_out_and_support() {
        let op = ground_ops();
        let z = ComplexField::zeros(grid(), 0.0);
        for kind in [OperatorKind::LPlus, OperatorKind::LMinus, OperatorKind::Lb, OperatorKind::Hamiltonian] {
            assert!(apply(&op.with_kind(kind), &z).unwrap().values.iter().all(|v| *v == Complex64::default()));
        }
        let wide = ComplexField::from_real(grid(), 0.0, |x| (-x * x / 200.0).exp());
        assert!(matches!(apply(&op, &wide), Err(Error::Support(_))));
        assert!(apply(&op.with_kind(OperatorKind::DdtPlusLb), &z).is_err());
    }

    #[test]
    fn lb_is_bilateral_combination() {
        let p = FreePacket::natural(1.0, 0.7);
        let psi = ComplexField::from_fn(grid(), 0.3, |x| p.psi(x, 0.3));
        let cfg = PhysConfig::natural(Potential::Zero);
        let df = fields_from_psi(&psi, &cfg).unwrap();
        let op = OperatorHandle::new(OperatorKind::Lb, &df, &cfg).unwrap();
        for c in [-2.0, 0.0, 1.5] {
            let f = TestFunction::bump(c, 2.0).with_poly(vec![1.0, 0.3]).sample(grid(), 0.0);
            let lb = apply(&op, &f).unwrap();
            let lp = apply(&op.with_kind(OperatorKind::LPlus), &f).unwrap();
            let lm = apply(&op.with_kind(OperatorKind::LMinus), &f).unwrap();
            for j in 0..grid().n_points {
                let want = crate::sde::W_PLUS * lp.values[j] + crate::sde::W_MINUS * lm.values[j];
                assert!((lb.values[j] - want).norm() <= 1e-10 * (1.0 + lb.values[j].norm()));
            }
        }
    }

    #[test]
    fn lemma1_schrodinger_and_heat() {
        let g = Coherent::ground();
        let c = Coherent::natural(1.0);
        let u = record(|x, t| g.psi(x, t), 0.6);
        let th = record(|x, t| c.psi(x, t), 0.6);
        let a = Complex64::new(0.0, 0.5);
        let b = Complex64::new(0.0, -1.0);
        for t in [0.1, 0.3, 0.5] {
            let r = lemma1_check(&u, &th, a, b, t).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let same = lemma1_check(&u, &u, a, b, 0.3).unwrap();
        assert!(same.notes[0].contains("0e0"), "{same:?}");

        let h1 = ComplexField::from_real(grid(), 1.0, |x| (-x * x / 2.0).exp());
        let hu = heat_terminal_solve(&h1, &harmonic(), 0.0, 1.0).unwrap();
        let hth = hu.scaled(Complex64::new(2.5, 0.0));
        let r = lemma1_check(&hu, &hth, Complex64::new(-0.5, 0.0), Complex64::new(1.0, 0.0), 0.5).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn theorem2_examples() {
        let g = Coherent::ground();
        let c = Coherent::natural(1.0);
        let rg = record(|x, t| g.psi(x, t), 0.3);
        let rc = record(|x, t| c.psi(x, t), 0.3);
        let bump = TestFunction::bump(0.0, 3.0);
        let xb = TestFunction::bump(0.5, 3.0).with_poly(vec![0.0, 1.0]).with_omega(2.0);
        assert!(theorem2_conjugation_check(&rg, &bump, 0.1).unwrap().pass);
        assert!(theorem2_conjugation_check(&rc, &xb, 0.2).unwrap().pass);
        let zero = TestFunction::bump(0.0, 1.0).scaled(Complex64::default());
        assert_eq!(theorem2_conjugation_check(&rc, &zero, 0.2).unwrap().max_residual, 0.0);
        let a = theorem2_conjugation_check(&rc, &xb, 0.2).unwrap().max_residual;
        let b = theorem2_conjugation_check(&rc.scaled(Complex64::from_polar(1.0, 0.9)), &xb, 0.2).unwrap().max_residual;
        assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn ground_state_transform() {
        let psi = ground_psi();
        let f = TestFunction::bump(0.3, 2.5).sample(grid(), 0.0);
        let r = ground_state_transform_check(&psi, &harmonic(), &f).unwrap();
        assert!(r.report.pass, "{r:?}");
        assert!((r.energy - 0.5).abs() <= 1e-8);
        let one = ComplexField::from_real(grid(), 0.0, |_| 1.0);
        let r = ground_state_transform_check(&psi, &harmonic(), &one).unwrap();
        assert!(r.weighted_residual <= 1e-6 && r.lhs_max <= 1e-6, "{r:?}");
        let bent = ComplexField::from_real(grid(), 0.0, |x| Coherent::ground().psi(x, 0.0).re * (1.0 + 0.01 * x * x));
        assert!(matches!(ground_state_transform_check(&bent, &harmonic(), &f), Err(Error::Precondition(_))));
    }

    #[test]
    fn hj_theta_examples() {
        let g = Coherent::ground();
        let c = Coherent::natural(1.0);
        let rg = record(|x, t| g.psi(x, t), 0.3);
        let rc = record(|x, t| c.psi(x, t), 0.3);
        let same = hj_theta_check(&rg, &rg, 0.1).unwrap();
        assert_eq!(same.theta.max_residual, 0.0);
        let rot = hj_theta_check(&rg, &rg.scaled(Complex64::from_polar(1.0, 2.0)), 0.1).unwrap();
        assert!(rot.theta.max_residual <= 1e-10, "{rot:?}");
        let r = hj_theta_check(&rg, &rc, 0.2).unwrap();
        assert!(r.theta.pass && r.ratio.pass, "{r:?}");
    }

    #[test]
    fn bdg_residual_on_free_record() {
        let p = FreePacket::natural(1.0, 1.0);
        let psi = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
        let rec = schrodinger_evolve(&psi, &PhysConfig::natural(Potential::Zero), 0.55).unwrap();
        let r = kernel_pq_bdg_check(&rec, 0.0, 0.3, 0.5, 6.0).unwrap();
        assert!(r.pass, "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn operators_are_linear(
            c1 in -3.0f64..3.0, c2 in -3.0f64..3.0,
            ar in -2.0f64..2.0, ai in -2.0f64..2.0, br in -2.0f64..2.0, bi in -2.0f64..2.0,
        ) {
            let op = ground_ops();
            let f = TestFunction::bump(c1, 2.0).sample(grid(), 0.0);
            let g = TestFunction::bump(c2, 1.5).with_poly(vec![0.5, -1.0, 0.2]).sample(grid(), 0.0);
            let (a, b) = (Complex64::new(ar, ai), Complex64::new(br, bi));
            let comb = f.zip_with(&g, |x, y| a * x + b * y).unwrap();
            for kind in [OperatorKind::LPlus, OperatorKind::LMinus, OperatorKind::Lb, OperatorKind::Hamiltonian] {
                let o = op.with_kind(kind);
                let lhs = apply(&o, &comb).unwrap();
                let (af, ag) = (apply(&o, &f).unwrap(), apply(&o, &g).unwrap());
                for j in 0..grid().n_points {
                    let rhs = a * af.values[j] + b * ag.values[j];
                    prop_assert!((lhs.values[j] - rhs).norm() <= 1e-12 * (1.0 + af.values[j].norm() + ag.values[j].norm()) * 1e3);
                }
            }
        }
    }
}
