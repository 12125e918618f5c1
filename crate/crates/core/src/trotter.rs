//! Time-sliced propagation: alternating free-kernel quadrature and potential
//! factors, for `exp(−itH/ħ)` and for the heat semigroup `exp(−tH)`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    heat_terminal_solve, kernel_k, kernel_p, schrodinger_evolve, EvolutionRecord, PhysConfig, RecordKind,
};
use crate::fields::drift_from_h;
use crate::grid::{gradient_slice, interp, interp_slice, ComplexField, GridSpec, Order};
use crate::io::fmt_f64;
use crate::report::ResidualReport;
use crate::stepper::{Edge, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrotterKind {
    Quantum,
    Heat,
}

impl TrotterKind {
    pub fn name(self) -> &'static str {
        match self {
            TrotterKind::Quantum => "quantum",
            TrotterKind::Heat => "heat",
        }
    }
}

impl std::str::FromStr for TrotterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(TrotterKind::Quantum),
            "heat" => Ok(TrotterKind::Heat),
            _ => Err(Error::InvalidParameter(format!("unknown trotter kind {s:?}"))),
        }
    }
}

/// Free quantum kernel used for a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeKernel {
    /// Exact free propagator restricted to lattice functions (periodic
    /// band-limited kernel). No aliasing of the Fresnel oscillation.
    #[default]
    Projected,
    /// `K(x − y)` sampled on the grid with trapezoid weights.
    Trapezoid,
}

/// Where the potential factor is evaluated within a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialOrder {
    /// At the new point, after the kernel.
    #[default]
    PostStep,
    /// At the old point, before the kernel.
    PreStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrotterOptions {
    pub kernel: FreeKernel,
    pub order: PotentialOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrotterRun {
    pub l: usize,
    pub kind: TrotterKind,
    pub result: ComplexField,
    pub reference: ComplexField,
    pub l2_error: f64,
    pub warnings: Vec<String>,
    /// Heat only: negative quadrature values clipped to zero.
    pub clipped: usize,
}

impl TrotterRun {
    pub fn error_against(&self, other: &ComplexField) -> Result<f64> {
        self.result.l2_distance(other)
    }
}

/// Fraction of `Σ|f|²` allowed within one unit of the domain edge.
pub const EDGE_MASS: f64 = 1e-6;

fn edge_fraction(f: &ComplexField) -> f64 {
    let l = f.grid.half_width - 1.0;
    let (mut edge, mut all) = (0.0, 0.0);
    for (j, v) in f.values.iter().enumerate() {
        let m = v.norm_sqr();
        all += m;
        if f.grid.x(j).abs() > l {
            edge += m;
        }
    }
    if all > 0.0 {
        edge / all
    } else {
        0.0
    }
}

/// Convolution table `c[i − j + n − 1]` of a translation-invariant kernel.
struct Convolution {
    table: Vec<Complex64>,
    periodic: bool,
}

impl Convolution {
    fn projected(grid: &GridSpec, tau: f64, cfg: &PhysConfig) -> Self {
        let n = grid.n_points;
        let period = n as f64 * grid.dx();
        let phases: Vec<Complex64> = (0..n)
            .map(|k| {
                let ks = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let kappa = 2.0 * PI * ks / period;
                Complex64::from_polar(1.0, -cfg.hbar * kappa * kappa * tau / (2.0 * cfg.mass))
            })
            .collect();
        let table = (0..n)
            .map(|d| {
                let mut acc = Complex64::default();
                for (k, p) in phases.iter().enumerate() {
                    acc += p * Complex64::from_polar(1.0, 2.0 * PI * ((k * d) % n) as f64 / n as f64);
                }
                acc / n as f64
            })
            .collect();
        Self { table, periodic: true }
    }

    fn sampled(grid: &GridSpec, kernel: impl Fn(f64) -> Result<Complex64>) -> Result<Self> {
        let n = grid.n_points;
        let dx = grid.dx();
        let table =
            (0..2 * n - 1).map(|d| Ok(kernel((d as f64 - (n - 1) as f64) * dx)? * dx)).collect::<Result<_>>()?;
        Ok(Self { table, periodic: false })
    }

    fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = f.len();
        if self.periodic {
            return (0..n)
                .map(|i| {
                    let mut acc = Complex64::default();
                    for (j, v) in f.iter().enumerate() {
                        acc += self.table[(i + n - j) % n] * v;
                    }
                    acc
                })
                .collect();
        }
        let mut w = f.to_vec();
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        (0..n)
            .map(|i| {
                let mut acc = Complex64::default();
                for (j, v) in w.iter().enumerate() {
                    acc += self.table[i + n - 1 - j] * v;
                }
                acc
            })
            .collect()
    }
}

/// Lower bound on `dt_slice` for a resolvable Fresnel oscillation.
pub fn fresnel_threshold(grid: &GridSpec, cfg: &PhysConfig) -> f64 {
    grid.dx() * grid.dx() * cfg.mass / (PI * cfg.hbar)
}

fn slice_warnings(grid: &GridSpec, tau: f64, cfg: &PhysConfig, kernel: FreeKernel) -> Vec<String> {
    let mut out = Vec::new();
    let min = fresnel_threshold(grid, cfg);
    if tau < min {
        out.push(format!("dt_slice {tau:e} below Fresnel threshold {min:e}"));
    }
    // local kernel wavenumber m|x − y|/(ħτ) against the grid Nyquist π/dx
    let k_max = cfg.mass * 2.0 * grid.half_width / (cfg.hbar * tau);
    if kernel == FreeKernel::Trapezoid && k_max > PI / grid.dx() {
        out.push(format!("trapezoid kernel aliased: wavenumber {k_max:.1} exceeds Nyquist {:.1}", PI / grid.dx()));
    }
    out
}

fn quantum_convolution(grid: &GridSpec, tau: f64, cfg: &PhysConfig, kernel: FreeKernel) -> Result<Convolution> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("dt_slice must be positive, got {tau}")));
    }
    match kernel {
        FreeKernel::Projected => Ok(Convolution::projected(grid, tau, cfg)),
        FreeKernel::Trapezoid => Convolution::sampled(grid, |d| kernel_k(0.0, 0.0, tau, d, cfg)),
    }
}

fn phase_factors(grid: &GridSpec, tau: f64, cfg: &PhysConfig) -> Result<Vec<Complex64>> {
    Ok(cfg.potential.sample(grid)?.iter().map(|v| Complex64::from_polar(1.0, -v * tau / cfg.hbar)).collect())
}

/// One slice: free-kernel quadrature, then `exp(−(i/ħ)V dt_slice)` at the new point.
pub fn trotter_step_quantum(psi: &ComplexField, dt_slice: f64, cfg: &PhysConfig) -> Result<ComplexField> {
    trotter_step_quantum_with(psi, dt_slice, cfg, TrotterOptions::default())
}

pub fn trotter_step_quantum_with(
    psi: &ComplexField,
    dt_slice: f64,
    cfg: &PhysConfig,
    opts: TrotterOptions,
) -> Result<ComplexField> {
    let conv = quantum_convolution(&psi.grid, dt_slice, cfg, opts.kernel)?;
    let phase = phase_factors(&psi.grid, dt_slice, cfg)?;
    Ok(quantum_slice(psi, &conv, &phase, opts.order, dt_slice))
}

fn quantum_slice(
    psi: &ComplexField,
    conv: &Convolution,
    phase: &[Complex64],
    order: PotentialOrder,
    tau: f64,
) -> ComplexField {
    let values = match order {
        PotentialOrder::PostStep => conv.apply(&psi.values).into_iter().zip(phase).map(|(v, p)| v * p).collect(),
        PotentialOrder::PreStep => {
            let pre: Vec<Complex64> = psi.values.iter().zip(phase).map(|(v, p)| v * p).collect();
            conv.apply(&pre)
        }
    };
    ComplexField { grid: psi.grid, values, time: psi.time + tau }
}

fn reference(psi0: &ComplexField, cfg: &PhysConfig, t: f64, kind: TrotterKind) -> Result<ComplexField> {
    match kind {
        TrotterKind::Quantum => Ok(schrodinger_evolve(psi0, cfg, t)?.last().clone()),
        TrotterKind::Heat => {
            let rec = heat_terminal_solve(psi0, cfg, psi0.time - t, psi0.time)?;
            let f = rec.initial();
            Ok(ComplexField { grid: psi0.grid, values: f.values.clone(), time: f.time })
        }
    }
}

/// `l` slices over a span `t`. Heat runs backward from `psi0` (terminal data at
/// `psi0.time`) with unit diffusion; quantum runs forward.
pub fn trotter_evolve(
    psi0: &ComplexField,
    cfg: &PhysConfig,
    t: f64,
    l: usize,
    kind: TrotterKind,
) -> Result<TrotterRun> {
    trotter_evolve_with(psi0, cfg, t, l, kind, TrotterOptions::default(), None)
}

/// As [`trotter_evolve`], with options and an optional precomputed reference.
pub fn trotter_evolve_with(
    psi0: &ComplexField,
    cfg: &PhysConfig,
    t: f64,
    l: usize,
    kind: TrotterKind,
    opts: TrotterOptions,
    reference_field: Option<&ComplexField>,
) -> Result<TrotterRun> {
    if l == 0 {
        return Err(Error::InvalidParameter("slice count must be at least 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("span must be positive, got {t}")));
    }
    let grid = psi0.grid;
    let tau = t / l as f64;
    let mut warnings = Vec::new();
    let mut clipped = 0;
    let mut f = psi0.clone();
    match kind {
        TrotterKind::Quantum => {
            warnings.extend(slice_warnings(&grid, tau, cfg, opts.kernel));
            let conv = quantum_convolution(&grid, tau, cfg, opts.kernel)?;
            let phase = phase_factors(&grid, tau, cfg)?;
            let norm0 = psi0.norm_sqr();
            let mut drift_noted = false;
            for k in 1..=l {
                let before = f.norm_sqr();
                f = quantum_slice(&f, &conv, &phase, opts.order, tau);
                let edge = edge_fraction(&f);
                if edge > EDGE_MASS {
                    return Err(Error::Support(format!(
                        "domain too small: edge mass fraction {edge:e} after slice {k} of {l}"
                    )));
                }
                let change = (f.norm_sqr() - before).abs() / norm0;
                if change > 1e-6 && !drift_noted {
                    warnings.push(format!("slice norm change {change:e} at slice {k}"));
                    drift_noted = true;
                }
            }
        }
        TrotterKind::Heat => {
            let conv = Convolution::sampled(&grid, |d| Ok(Complex64::new(kernel_p(0.0, 0.0, tau, d)?, 0.0)))?;
            let damp: Vec<f64> = cfg.potential.sample(&grid)?.iter().map(|v| (-v * tau).exp()).collect();
            for _ in 0..l {
                let pre: Vec<Complex64> = match opts.order {
                    PotentialOrder::PostStep => f.values.clone(),
                    PotentialOrder::PreStep => f.values.iter().zip(&damp).map(|(v, d)| v * d).collect(),
                };
                let mut next = conv.apply(&pre);
                if opts.order == PotentialOrder::PostStep {
                    for (v, d) in next.iter_mut().zip(&damp) {
                        *v *= d;
                    }
                }
                for v in next.iter_mut() {
                    v.im = 0.0;
                    if v.re < 0.0 {
                        v.re = 0.0;
                        clipped += 1;
                    }
                }
                f = ComplexField { grid, values: next, time: f.time - tau };
            }
            if clipped > 0 {
                warnings.push(format!("{clipped} negative quadrature values clipped"));
            }
        }
    }
    let reference = match reference_field {
        Some(r) => r.clone(),
        None => reference(psi0, cfg, t, kind)?,
    };
    let l2_error = f.l2_distance(&reference)?;
    Ok(TrotterRun { l, kind, result: f, reference, l2_error, warnings, clipped })
}

/// Runs every slice count against one shared reference, in parallel.
pub fn convergence_scan(
    psi0: &ComplexField,
    cfg: &PhysConfig,
    t: f64,
    ls: &[usize],
    kind: TrotterKind,
    opts: TrotterOptions,
    reference_field: Option<&ComplexField>,
) -> Result<Vec<TrotterRun>> {
    let reference = match reference_field {
        Some(r) => r.clone(),
        None => reference(psi0, cfg, t, kind)?,
    };
    ls.par_iter().map(|&l| trotter_evolve_with(psi0, cfg, t, l, kind, opts, Some(&reference))).collect()
}

/// `error(l_prev)/error(l)` for consecutive runs.
pub fn convergence_ratios(runs: &[TrotterRun]) -> Vec<f64> {
    runs.windows(2).map(|w| w[0].l2_error / w[1].l2_error).collect()
}

/// CSV: `kind,l,l2_error,ratio_to_prev` (`nan` on the first row).
pub fn write_convergence_csv<W: Write>(runs: &[TrotterRun], mut w: W) -> Result<()> {
    writeln!(w, "kind,l,l2_error,ratio_to_prev")?;
    for (i, r) in runs.iter().enumerate() {
        let ratio = if i == 0 { "nan".to_string() } else { fmt_f64(runs[i - 1].l2_error / r.l2_error) };
        writeln!(w, "{},{},{},{}", r.kind.name(), r.l, fmt_f64(r.l2_error), ratio)?;
    }
    Ok(())
}

/// Forward Kolmogorov solve `∂s q = ½Δq − ∇(b q)` on the record's time
/// lattice, from a Gaussian of width `width` centred at `x`. `b = None`
/// solves the driftless equation.
fn forward_density(h_rec: &EvolutionRecord, drifts: Option<&[Vec<f64>]>, x: f64, width: f64) -> Vec<f64> {
    let grid = h_rec.grid;
    let dx = grid.dx();
    let n = grid.n_points;
    let tau = h_rec.dt();
    let stepper = Stepper::new(Complex64::new(0.5, 0.0), &vec![Complex64::default(); n], dx, tau, Edge::Dirichlet);
    let norm = (2.0 * PI * width * width).powf(-0.5);
    let mut q: Vec<Complex64> = (0..n)
        .map(|j| {
            let d = grid.x(j) - x;
            Complex64::new(norm * (-d * d / (2.0 * width * width)).exp(), 0.0)
        })
        .collect();
    let flux_div = |q: &[Complex64], b: &[f64]| -> Vec<Complex64> {
        let bq: Vec<f64> = q.iter().zip(b).map(|(v, b)| v.re * b).collect();
        gradient_slice(&bq, dx, Order::Fourth).into_iter().map(|g| Complex64::new(-g, 0.0)).collect()
    };
    let mut prev: Option<Vec<Complex64>> = None;
    for k in 0..h_rec.len() - 1 {
        match drifts {
            None => stepper.step(&mut q, None),
            Some(bs) => {
                let now = flux_div(&q, &bs[k]);
                let src: Vec<Complex64> = match &prev {
                    Some(p) => now.iter().zip(p).map(|(a, b)| a * 1.5 - b * 0.5).collect(),
                    None => now.clone(),
                };
                stepper.step(&mut q, Some(&src));
                prev = Some(now);
            }
        }
    }
    q.into_iter().map(|v| v.re).collect()
}

/// `h(x,t)/h1(y)·q(t,x,t1,y)` and the regularized `p(t,x,t1,y)` on a sub-grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop7Field {
    pub t: f64,
    pub t1: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `product[i][j]` for `xs[i]`, `ys[j]`.
    pub product: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

/// Initial width of the regularized delta, in grid spacings.
pub const DELTA_WIDTH_NODES: f64 = 3.0;

/// Product field over starting points `xs` (at the record start) and end
/// points `|y| ≤ y_max` (at the record end, every 4th node).
pub fn prop7_product(h_rec: &EvolutionRecord, xs: &[f64], y_max: f64) -> Result<Prop7Field> {
    if h_rec.kind != RecordKind::Heat {
        return Err(Error::Precondition("expected a heat record".into()));
    }
    if !h_rec.config.potential.is_zero() {
        return Err(Error::Precondition("the kernel identity needs V = 0 in the heat record".into()));
    }
    let grid = h_rec.grid;
    let width = DELTA_WIDTH_NODES * grid.dx();
    let drifts: Vec<Vec<f64>> = h_rec.fields.iter().map(|h| Ok(drift_from_h(h)?.b_plus)).collect::<Result<_>>()?;
    let y_nodes: Vec<usize> = (0..grid.n_points).filter(|&j| grid.x(j).abs() <= y_max).step_by(4).collect();
    let ys: Vec<f64> = y_nodes.iter().map(|&j| grid.x(j)).collect();
    let h1 = h_rec.last();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = xs
        .par_iter()
        .map(|&x| {
            let q = forward_density(h_rec, Some(&drifts), x, width);
            let p = forward_density(h_rec, None, x, width);
            let hx = interp(h_rec.initial(), x)?.re;
            let product = y_nodes.iter().map(|&j| hx / h1.values[j].re * q[j]).collect();
            let pr = y_nodes.iter().map(|&j| p[j]).collect();
            Ok((product, pr))
        })
        .collect::<Result<_>>()?;
    let (product, p) = rows.into_iter().unzip();
    Ok(Prop7Field { t: h_rec.start(), t1: h_rec.end(), xs: xs.to_vec(), ys, product, p })
}

/// Max of `|h(x,t)/h1(y)·q − p|` over `x ∈ {−1, −0.5, 0, 0.5, 1}`, `|y| ≤ 3`.
///
/// Both `q` and `p` start from the same narrow Gaussian, so `p` is the
/// regularized driftless kernel.
pub fn prop7_kernel_check(h_rec: &EvolutionRecord) -> Result<ResidualReport> {
    let f = prop7_product(h_rec, &[-1.0, -0.5, 0.0, 0.5, 1.0], 3.0)?;
    let worst = max_diff(&f.product, &f.p);
    let tau = f.t1 - f.t;
    let width = DELTA_WIDTH_NODES * h_rec.grid.dx();
    // closed-form regularized kernel as a cross-check on the driftless solve
    let mut closed = 0.0f64;
    for (i, &x) in f.xs.iter().enumerate() {
        for (j, &y) in f.ys.iter().enumerate() {
            closed = closed.max((f.p[i][j] - kernel_p(0.0, x, tau + width * width, y)?).abs());
        }
    }
    Ok(ResidualReport::new("prop7_kernel", worst, 5e-2, h_rec.grid, Some(h_rec.dt()))
        .with_note(format!("driftless solve vs closed-form Gaussian of variance s + w^2: {closed:e}")))
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max difference between the product fields of two heat records.
pub fn prop7_independence(a: &EvolutionRecord, b: &EvolutionRecord) -> Result<ResidualReport> {
    a.grid.ensure_same(&b.grid)?;
    let xs = [-1.0, 0.0, 1.0];
    let fa = prop7_product(a, &xs, 3.0)?;
    let fb = prop7_product(b, &xs, 3.0)?;
    Ok(ResidualReport::new("prop7_independence", max_diff(&fa.product, &fb.product), 5e-2, a.grid, Some(a.dt())))
}

/// Value of `h` at `(x, t)` by nearest-time, linear-space lookup.
pub fn heat_value(h_rec: &EvolutionRecord, x: f64, t: f64) -> Result<f64> {
    let f = &h_rec.fields[h_rec.nearest_index(t)?];
    let re: Vec<f64> = f.values.iter().map(|v| v.re).collect();
    interp_slice(&f.grid, &re, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{apply_kernel_k, Potential};
    use crate::grid::Boundary;
    use crate::states::{Coherent, FreePacket};

    fn grid() -> GridSpec {
        GridSpec::standard(Boundary::DirichletZero)
    }

    fn free() -> PhysConfig {
        PhysConfig::natural(Potential::Zero)
    }

    #[test]
    fn free_slice_is_exact() {
        let p = FreePacket::natural(1.0, 1.0);
        let psi = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
        let out = trotter_step_quantum(&psi, 1.0, &free()).unwrap();
        let exact = ComplexField::from_fn(grid(), 1.0, |x| p.psi(x, 1.0));
        assert!(out.l2_distance(&exact).unwrap() <= 1e-6);
        assert!((out.norm_sqr() - psi.norm_sqr()).abs() <= 1e-12);
        let raw = trotter_step_quantum_with(
            &psi,
            1.0,
            &free(),
            TrotterOptions { kernel: FreeKernel::Trapezoid, ..Default::default() },
        )
        .unwrap();
        let direct = apply_kernel_k(&psi, 1.0, &free()).unwrap();
        assert!(raw.l2_distance(&direct).unwrap() <= 1e-12);
    }

    #[test]
    fn single_slice_runs_equal_one_application() {
        let p = FreePacket::natural(1.0, 0.0);
        let psi = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
        let run = trotter_evolve(&psi, &free(), 0.5, 1, TrotterKind::Quantum).unwrap();
        assert_eq!(run.result.values, trotter_step_quantum(&psi, 0.5, &free()).unwrap().values);

        let h1 = ComplexField::from_real(grid(), 1.0, |x| (-x * x / 4.0).exp());
        let run = trotter_evolve(&h1, &free(), 0.5, 1, TrotterKind::Heat).unwrap();
        let conv = Convolution::sampled(&grid(), |d| Ok(Complex64::new(kernel_p(0.0, 0.0, 0.5, d)?, 0.0))).unwrap();
        assert_eq!(run.result.values, conv.apply(&h1.values));
        assert!(run.l2_error <= 1e-4, "{}", run.l2_error);
    }

    #[test]
    fn harmonic_quantum_convergence() {
        let c = Coherent::natural(1.0);
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let psi = ComplexField::from_fn(grid(), 0.0, |x| c.psi(x, 0.0));
        let runs =
            convergence_scan(&psi, &cfg, 1.0, &[8, 16, 32, 64], TrotterKind::Quantum, TrotterOptions::default(), None)
                .unwrap();
        for r in convergence_ratios(&runs) {
            assert!((1.6..=2.4).contains(&r), "{r}");
        }
        assert!(runs[3].l2_error <= 0.02);
        for r in &runs {
            assert!((r.result.norm_sqr() - 1.0).abs() <= 1e-6 * r.l as f64);
        }
    }

    #[test]
    fn harmonic_heat_against_eigenfunction() {
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let h1 = ComplexField::from_real(grid(), 1.0, |x| (-x * x / 2.0).exp());
        let exact = ComplexField::from_real(grid(), 0.0, |x| (-0.5f64).exp() * (-x * x / 2.0).exp());
        let runs = convergence_scan(
            &h1,
            &cfg,
            1.0,
            &[8, 16, 32, 64],
            TrotterKind::Heat,
            TrotterOptions::default(),
            Some(&exact),
        )
        .unwrap();
        for r in convergence_ratios(&runs) {
            assert!((1.6..=2.4).contains(&r), "{r}");
        }
        assert!(runs[3].l2_error <= 0.02);
        assert!(runs.iter().all(|r| r.clipped == 0));
    }

    #[test]
    fn pre_step_order_also_converges() {
        let c = Coherent::natural(1.0);
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let psi = ComplexField::from_fn(grid(), 0.0, |x| c.psi(x, 0.0));
        let opts = TrotterOptions { order: PotentialOrder::PreStep, ..Default::default() };
        let runs = convergence_scan(&psi, &cfg, 1.0, &[16, 32], TrotterKind::Quantum, opts, None).unwrap();
        let r = convergence_ratios(&runs)[0];
        assert!((1.6..=2.4).contains(&r), "{r}");
    }

    #[test]
    fn rejects_bad_input_and_small_domains() {
        let c = Coherent::natural(1.0);
        let psi = ComplexField::from_fn(grid(), 0.0, |x| c.psi(x, 0.0));
        assert!(trotter_evolve(&psi, &free(), 1.0, 0, TrotterKind::Quantum).is_err());
        assert!(trotter_step_quantum(&psi, 0.0, &free()).is_err());
        let small = GridSpec::new(3.0, 128, Boundary::DirichletZero).unwrap();
        let wide = ComplexField::from_fn(small, 0.0, |x| FreePacket::natural(0.5, 2.0).psi(x, 0.0));
        assert!(matches!(trotter_evolve(&wide, &free(), 2.0, 4, TrotterKind::Quantum), Err(Error::Support(_))));
        let run = trotter_evolve(&psi, &free(), 1e-5, 1, TrotterKind::Quantum).unwrap();
        assert!(run.warnings.iter().any(|w| w.contains("Fresnel")));
    }

    #[test]
    fn convergence_csv_layout() {
        let c = Coherent::natural(1.0);
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let psi = ComplexField::from_fn(grid(), 0.0, |x| c.psi(x, 0.0));
        let runs =
            convergence_scan(&psi, &cfg, 0.2, &[2, 4], TrotterKind::Quantum, TrotterOptions::default(), None).unwrap();
        let mut buf = Vec::new();
        write_convergence_csv(&runs, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "kind,l,l2_error,ratio_to_prev");
        assert!(lines[1].starts_with("quantum,2,") && lines[1].ends_with(",nan"));
        assert_eq!(lines.len(), 3);
    }

    fn heat_record(h1: impl Fn(f64) -> f64) -> EvolutionRecord {
        let f = ComplexField::from_real(grid(), 1.0, h1);
        heat_terminal_solve(&f, &free(), 0.0, 1.0).unwrap()
    }

    #[test]
    fn prop7_flat_and_exponential() {
        let flat = prop7_kernel_check(&heat_record(|_| 1.0)).unwrap();
        assert!(flat.max_residual <= 1e-6, "{flat:?}");
        let exp = heat_record(|x| (0.5 * x).exp());
        let r = prop7_kernel_check(&exp).unwrap();
        assert!(r.pass, "{r:?}");
        let other = heat_record(|x| 1.0 + 0.5 * (-x * x).exp());
        assert!(prop7_independence(&exp, &other).unwrap().pass);
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let h = heat_terminal_solve(&ComplexField::from_real(grid(), 1.0, |_| 1.0), &cfg, 0.0, 0.1).unwrap();
        assert!(matches!(prop7_kernel_check(&h), Err(Error::Precondition(_))));
    }
}
