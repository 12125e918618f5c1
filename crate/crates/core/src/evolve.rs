//! Schrödinger and terminal-value heat evolution, plus the explicit kernels
//! `K` (free propagator), `p` (Wiener transition density) and `p_q`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_slice, interp, laplacian_slice, Boundary, ComplexField, GridSpec, Order};
use crate::io::fmt_f64;
use crate::report::ResidualReport;
use crate::stepper::{Edge, Stepper};

/// Scalar potential `V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Constant {
        value: f64,
    },
    /// `stiffness * (x - center)^2 / 2`
    Harmonic {
        stiffness: f64,
        center: f64,
    },
    Shifted {
        base: Box<Potential>,
        shift: f64,
    },
}

impl Potential {
    pub fn harmonic(stiffness: f64) -> Self {
        Potential::Harmonic { stiffness, center: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant { value } => *value,
            Potential::Harmonic { stiffness, center } => 0.5 * stiffness * (x - center) * (x - center),
            Potential::Shifted { base, shift } => base.eval(x) + shift,
        }
    }

    /// `V - shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Potential::Shifted { base: Box::new(self.clone()), shift: -shift }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Constant { value } => *value == 0.0,
            Potential::Harmonic { stiffness, .. } => *stiffness == 0.0,
            Potential::Shifted { base, shift } => *shift == 0.0 && base.is_zero(),
        }
    }

    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let v: Vec<f64> = grid.points().iter().map(|&x| self.eval(x)).collect();
        if let Some(j) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("potential at x = {}", grid.x(j))));
        }
        Ok(v)
    }
}

/// Physical constants, potential and solver time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysConfig {
    pub hbar: f64,
    pub mass: f64,
    pub potential: Potential,
    pub dt: f64,
}

impl PhysConfig {
    pub fn new(hbar: f64, mass: f64, potential: Potential, dt: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("mass", mass), ("dt", dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { hbar, mass, potential, dt })
    }

    /// `ħ = m = 1`, `dt = 1e-3`.
    pub fn natural(potential: Potential) -> Self {
        Self { hbar: 1.0, mass: 1.0, potential, dt: 1e-3 }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Diffusion coefficient `ħ/m`.
    pub fn sigma2(&self) -> f64 {
        self.hbar / self.mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Schrodinger,
    Heat,
}

/// Fields on a uniform time lattice.
#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub kind: RecordKind,
    pub config: PhysConfig,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub fields: Vec<ComplexField>,
}

impl EvolutionRecord {
    /// Samples `f(x, t)` on `n_steps + 1` uniform times starting at `t0`.
    pub fn sampled(
        kind: RecordKind,
        config: PhysConfig,
        grid: GridSpec,
        t0: f64,
        n_steps: usize,
        f: impl Fn(f64, f64) -> Complex64,
    ) -> Self {
        let times: Vec<f64> = (0..=n_steps).map(|k| t0 + k as f64 * config.dt).collect();
        let fields = times.iter().map(|&t| ComplexField::from_fn(grid, t, |x| f(x, t))).collect();
        Self { kind, config, grid, times, fields }
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            self.config.dt
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("record has at least one time")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the record time nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        let (start, end) = (self.start(), self.end());
        if t < start - 0.5 * dt || t > end + 0.5 * dt || t.is_nan() {
            return Err(Error::OutOfSpan { t, start, end });
        }
        let k = ((t - start) / dt).round().max(0.0) as usize;
        Ok(k.min(self.times.len() - 1))
    }

    /// Index of a time that must lie on the record lattice.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = self.nearest_index(t)?;
        if (self.times[k] - t).abs() > 1e-6 * self.dt() {
            return Err(Error::InvalidParameter(format!("t = {t} is not a record time")));
        }
        Ok(k)
    }

    pub fn at(&self, t: f64) -> Result<&ComplexField> {
        Ok(&self.fields[self.nearest_index(t)?])
    }

    pub fn initial(&self) -> &ComplexField {
        &self.fields[0]
    }

    pub fn last(&self) -> &ComplexField {
        self.fields.last().expect("record has at least one time")
    }

    /// Every field multiplied by a constant (e.g. a global phase).
    pub fn scaled(&self, c: Complex64) -> Self {
        Self { fields: self.fields.iter().map(|f| f.map(|v| v * c)).collect(), ..self.clone() }
    }

    /// CSV rows `t,x,re,im`, one per (time, node).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_csv_every(w, 1)
    }

    /// As `write_csv`, keeping every `stride`-th record time plus the last.
    pub fn write_csv_every<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        writeln!(w, "t,x,re,im")?;
        let last = self.fields.len() - 1;
        let keep = self.times.iter().zip(&self.fields).enumerate().filter(|(k, _)| k % stride == 0 || *k == last);
        for (_, (t, f)) in keep {
            for (j, v) in f.values.iter().enumerate() {
                writeln!(w, "{},{},{},{}", fmt_f64(*t), fmt_f64(self.grid.x(j)), fmt_f64(v.re), fmt_f64(v.im))?;
            }
        }
        Ok(())
    }
}

/// Crank–Nicolson evolution of `∂ψ/∂t = (iħ/2m)Δψ − (i/ħ)Vψ` from `psi0.time`
/// to `psi0.time + t1` with zero boundary values.
///
/// The step is `t1 / round(t1 / cfg.dt)`, so the final time is hit exactly.
pub fn schrodinger_evolve(psi0: &ComplexField, cfg: &PhysConfig, t1: f64) -> Result<EvolutionRecord> {
    if !(t1.is_finite() && t1 > 0.0) {
        return Err(Error::InvalidParameter(format!("evolution span must be positive, got {t1}")));
    }
    let norm = psi0.norm_sqr();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm });
    }
    let grid = psi0.grid.with_boundary(Boundary::DirichletZero);
    let v = cfg.potential.sample(&grid)?;
    let n_steps = ((t1 / cfg.dt).round() as usize).max(1);
    let tau = t1 / n_steps as f64;
    let alpha = Complex64::new(0.0, cfg.hbar / (2.0 * cfg.mass));
    let reaction: Vec<Complex64> = v.iter().map(|&vj| Complex64::new(0.0, -vj / cfg.hbar)).collect();
    let stepper = Stepper::new(alpha, &reaction, grid.dx(), tau, Edge::Dirichlet);

    let t0 = psi0.time;
    let mut current = psi0.values.clone();
    let n = current.len();
    current[0] = Complex64::default();
    current[n - 1] = Complex64::default();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut fields = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    fields.push(ComplexField { grid, values: current.clone(), time: t0 });
    for k in 1..=n_steps {
        stepper.step(&mut current, None);
        let t = t0 + k as f64 * tau;
        times.push(t);
        fields.push(ComplexField { grid, values: current.clone(), time: t });
    }
    let config = PhysConfig { dt: tau, ..cfg.clone() };
    Ok(EvolutionRecord { kind: RecordKind::Schrodinger, config, grid, times, fields })
}

/// Solves `∂h/∂t + ½Δh = V h` backward from `h(·, t1) = h1` to `t0`.
///
/// Unit diffusion: the returned record carries `ħ = m = 1`. Edges are
/// reflecting (zero flux), so spatially constant data stay constant and `h`
/// stays positive. The record is stored in increasing time.
pub fn heat_terminal_solve(h1: &ComplexField, cfg: &PhysConfig, t0: f64, t1: f64) -> Result<EvolutionRecord> {
    if !(t1 > t0) {
        return Err(Error::InvalidParameter(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    if let Some(j) = h1.values.iter().position(|v| !(v.re > 0.0) || v.im != 0.0) {
        return Err(Error::PositivityLost(format!(
            "terminal data must be real and positive; h1({}) = {}",
            h1.grid.x(j),
            h1.values[j]
        )));
    }
    let grid = h1.grid.with_boundary(Boundary::ClampDrift);
    let v = cfg.potential.sample(&grid)?;
    if let Some(j) = v.iter().position(|&x| x < 0.0) {
        return Err(Error::InvalidParameter(format!("potential negative at x = {}", grid.x(j))));
    }
    let span = t1 - t0;
    let n_steps = ((span / cfg.dt).round() as usize).max(1);
    let tau = span / n_steps as f64;
    let reaction: Vec<Complex64> = v.iter().map(|&vj| Complex64::new(-vj, 0.0)).collect();
    let stepper = Stepper::new(Complex64::new(0.5, 0.0), &reaction, grid.dx(), tau, Edge::Reflect);

    let mut current = h1.values.clone();
    let mut rev = Vec::with_capacity(n_steps + 1);
    rev.push(current.clone());
    for k in 1..=n_steps {
        stepper.step(&mut current, None);
        if let Some(j) = current.iter().position(|v| !(v.re > 0.0)) {
            return Err(Error::PositivityLost(format!(
                "h({}, {}) = {:e}; refine grid or step",
                grid.x(j),
                t1 - k as f64 * tau,
                current[j].re
            )));
        }
        for v in current.iter_mut() {
            v.im = 0.0;
        }
        rev.push(current.clone());
    }
    rev.reverse();
    let times: Vec<f64> = (0..=n_steps).map(|k| t0 + k as f64 * tau).collect();
    let fields = rev.into_iter().zip(&times).map(|(values, &time)| ComplexField { grid, values, time }).collect();
    let config = PhysConfig { hbar: 1.0, mass: 1.0, potential: cfg.potential.clone(), dt: tau };
    Ok(EvolutionRecord { kind: RecordKind::Heat, config, grid, times, fields })
}

fn check_order(s: f64, t: f64) -> Result<()> {
    if t > s {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("kernel needs t > s, got s = {s}, t = {t}")))
    }
}

/// Free Schrödinger propagator `[2πħi(t−s)/m]^{-1/2} exp[im|x−y|²/(2ħ(t−s))]`.
pub fn kernel_k(s: f64, y: f64, t: f64, x: f64, cfg: &PhysConfig) -> Result<Complex64> {
    check_order(s, t)?;
    let tau = t - s;
    let pref = Complex64::new(0.0, 2.0 * PI * cfg.hbar * tau / cfg.mass).sqrt().inv();
    let phase = cfg.mass * (x - y) * (x - y) / (2.0 * cfg.hbar * tau);
    Ok(pref * Complex64::from_polar(1.0, phase))
}

/// Transition density of standard Brownian motion.
pub fn kernel_p(s: f64, y: f64, t: f64, x: f64) -> Result<f64> {
    check_order(s, t)?;
    let tau = t - s;
    Ok((2.0 * PI * tau).powf(-0.5) * (-(x - y) * (x - y) / (2.0 * tau)).exp())
}

/// Vanishing threshold relative to the field maximum.
pub const VANISHING_RATIO: f64 = 1e-12;

/// `K(t0, y, t, x) ψ0(y) / ψ(t, x)`: fundamental solution of
/// `(∂t + v_q·∇ − (iħ/2m)Δ) u = 0`.
pub fn kernel_pq(t0: f64, y: f64, t: f64, x: f64, rec: &EvolutionRecord) -> Result<Complex64> {
    check_order(t0, t)?;
    let f0 = &rec.fields[rec.index_of(t0)?];
    let ft = &rec.fields[rec.index_of(t)?];
    let psi_t = interp(ft, x)?;
    if psi_t.norm() < VANISHING_RATIO * ft.max_abs() {
        return Err(Error::Vanishing { x, magnitude: psi_t.norm() });
    }
    let psi0 = interp(f0, y)?;
    Ok(kernel_k(t0, y, t, x, &rec.config)? * psi0 / psi_t)
}

/// Max-norm over `|x| ≤ L − 2` of `∂t log h + ½|∇log h|² + ½Δ log h − V`
/// at record time `t` (central time difference, fourth-order space).
pub fn check_log_heat(rec: &EvolutionRecord, t: f64) -> Result<ResidualReport> {
    if rec.kind != RecordKind::Heat {
        return Err(Error::Precondition("expected a heat record".into()));
    }
    let k = rec.index_of(t)?;
    if k == 0 || k + 1 >= rec.len() {
        return Err(Error::OutOfSpan {
            t,
            start: rec.times[1.min(rec.len() - 1)],
            end: rec.times[rec.len().saturating_sub(2)],
        });
    }
    let grid = rec.grid;
    let dt = rec.dt();
    let log = |i: usize| -> Vec<f64> { rec.fields[i].values.iter().map(|v| v.re.ln()).collect() };
    let (lm, l0, lp) = (log(k - 1), log(k), log(k + 1));
    let d1 = gradient_slice(&l0, grid.dx(), Order::Fourth);
    let d2 = laplacian_slice(&l0, grid.dx(), Order::Fourth);
    let v = rec.config.potential.sample(&grid)?;
    let inner = grid.half_width - 2.0;
    let worst = (0..grid.n_points)
        .filter(|&j| grid.x(j).abs() <= inner)
        .map(|j| ((lp[j] - lm[j]) / (2.0 * dt) + 0.5 * d1[j] * d1[j] + 0.5 * d2[j] - v[j]).abs())
        .fold(0.0, f64::max);
    Ok(ResidualReport::new("log_heat", worst, 1e-3, grid, Some(dt)))
}

/// `∫ K(s, y, t, x) f(y) dy` by trapezoid quadrature on the grid of `f`.
pub fn apply_kernel_k(f: &ComplexField, t: f64, cfg: &PhysConfig) -> Result<ComplexField> {
    let s = f.time;
    let grid = f.grid;
    let dx = grid.dx();
    let n = grid.n_points;
    // K depends on x - y only; tabulate on the 2N-1 lattice differences.
    let table: Vec<Complex64> =
        (0..2 * n - 1).map(|d| kernel_k(s, 0.0, t, (d as f64 - (n - 1) as f64) * dx, cfg)).collect::<Result<_>>()?;
    let mut weighted = f.values.clone();
    weighted[0] *= 0.5;
    weighted[n - 1] *= 0.5;
    let values = (0..n)
        .map(|i| {
            let mut acc = Complex64::default();
            for (j, w) in weighted.iter().enumerate() {
                acc += table[i + n - 1 - j] * w;
            }
            acc * dx
        })
        .collect();
    Ok(ComplexField { grid, values, time: t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gradient4, laplacian4};
    use crate::states::{Coherent, FreePacket};

    fn grid() -> GridSpec {
        GridSpec::standard(Boundary::DirichletZero)
    }

    fn free_packet_record(t1: f64) -> (FreePacket, EvolutionRecord) {
        let p = FreePacket::natural(1.0, 1.0);
        let psi0 = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
        (p, schrodinger_evolve(&psi0, &PhysConfig::natural(Potential::Zero), t1).unwrap())
    }

    #[test]
    fn free_packet_matches_closed_form() {
        let (p, rec) = free_packet_record(1.0);
        let exact = ComplexField::from_fn(grid(), 1.0, |x| p.psi(x, 1.0));
        let err = rec.last().l2_distance(&exact).unwrap();
        assert!(err <= 1e-4, "L2 error {err}");
        for f in &rec.fields {
            assert!((f.norm_sqr() - 1.0).abs() <= 1e-8);
        }
        assert_eq!(rec.len(), 1001);
    }

    #[test]
    fn ground_state_modulus_is_static() {
        let g = Coherent::ground();
        let psi0 = ComplexField::from_fn(grid(), 0.0, |x| g.psi(x, 0.0));
        let rec = schrodinger_evolve(&psi0, &PhysConfig::natural(Potential::harmonic(1.0)), 1.0).unwrap();
        let mut worst = 0.0f64;
        for f in &rec.fields {
            for (a, b) in f.values.iter().zip(&psi0.values) {
                worst = worst.max((a.norm() - b.norm()).abs());
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn coherent_center_follows_cosine() {
        let c = Coherent::natural(1.0);
        let psi0 = ComplexField::from_fn(grid(), 0.0, |x| c.psi(x, 0.0));
        let t1 = std::f64::consts::FRAC_PI_2;
        let rec = schrodinger_evolve(&psi0, &PhysConfig::natural(Potential::harmonic(1.0)), t1).unwrap();
        assert!((rec.end() - t1).abs() < 1e-12);
        let last = rec.last();
        let xs = grid().points();
        let mean = crate::grid::trapezoid(
            &last.values.iter().zip(&xs).map(|(v, x)| v.norm_sqr() * x).collect::<Vec<_>>(),
            grid().dx(),
        );
        assert!((mean - t1.cos()).abs() <= 1e-3, "{mean}");
    }

    #[test]
    fn time_reversal_by_conjugation() {
        let c = Coherent::natural(0.7);
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let psi0 = ComplexField::from_fn(grid(), 0.0, |x| c.psi(x, 0.0));
        let fwd = schrodinger_evolve(&psi0, &cfg, 0.5).unwrap();
        let back_in = fwd.last().map(|v| v.conj());
        let back_in = ComplexField { time: 0.0, ..back_in };
        let back = schrodinger_evolve(&back_in, &cfg, 0.5).unwrap();
        let ret = back.last().map(|v| v.conj());
        let ret = ComplexField { time: 0.0, ..ret };
        assert!(ret.l2_distance(&psi0).unwrap() <= 2e-8);
    }

    #[test]
    fn schrodinger_rejects_bad_input() {
        let psi = ComplexField::from_real(grid(), 0.0, |x| 2.0 * (-x * x).exp());
        assert!(matches!(
            schrodinger_evolve(&psi, &PhysConfig::natural(Potential::Zero), 1.0),
            Err(Error::NotNormalized { .. })
        ));
        let g = Coherent::ground();
        let psi = ComplexField::from_fn(grid(), 0.0, |x| g.psi(x, 0.0));
        let bad = PhysConfig::natural(Potential::Constant { value: f64::INFINITY });
        assert!(matches!(schrodinger_evolve(&psi, &bad, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn heat_constant_solutions() {
        let one = ComplexField::from_real(grid(), 1.0, |_| 1.0);
        let rec = heat_terminal_solve(&one, &PhysConfig::natural(Potential::Zero), 0.0, 1.0).unwrap();
        for f in &rec.fields {
            assert!(f.values.iter().all(|v| (v.re - 1.0).abs() < 1e-12));
        }
        let c = 0.5;
        let rec = heat_terminal_solve(&one, &PhysConfig::natural(Potential::Constant { value: c }), 0.0, 1.0).unwrap();
        for (t, f) in rec.times.iter().zip(&rec.fields) {
            let want = (-c * (1.0 - t)).exp();
            assert!(f.values.iter().all(|v| (v.re - want).abs() <= 1e-8), "t = {t}");
        }
    }

    // Oracle: h = exp(-(t1 - t)/2) exp(-x^2/2) solves the harmonic terminal problem.
    #[test]
    fn heat_harmonic_eigenfunction() {
        let h1 = ComplexField::from_real(grid(), 1.0, |x| (-x * x / 2.0).exp());
        let rec = heat_terminal_solve(&h1, &PhysConfig::natural(Potential::harmonic(1.0)), 0.0, 1.0).unwrap();
        assert_eq!(rec.kind, RecordKind::Heat);
        let first = rec.initial();
        for (j, v) in first.values.iter().enumerate() {
            let x = grid().x(j);
            assert!((v.re - (-0.5f64).exp() * (-x * x / 2.0).exp()).abs() <= 1e-5);
        }
    }

    #[test]
    fn heat_log_satisfies_riccati_form() {
        // ∂t log h + |∇log h|² + ½Δ log h = ½|∇log h|² + V
        let h1 = ComplexField::from_real(grid(), 1.0, |x| (-x * x / 2.0).exp() + 0.3 * (-(x - 1.0).powi(2)).exp());
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let rec = heat_terminal_solve(&h1, &cfg, 0.0, 1.0).unwrap();
        let k = 500;
        let dt = rec.dt();
        let logf = |i: usize| rec.fields[i].map(|v| Complex64::new(v.re.ln(), 0.0));
        let (lm, l0, lp) = (logf(k - 1), logf(k), logf(k + 1));
        let d1 = gradient4(&l0).unwrap();
        let d2 = laplacian4(&l0).unwrap();
        let mut worst = 0.0f64;
        for j in 0..grid().n_points {
            let x = grid().x(j);
            if x.abs() > 10.0 {
                continue;
            }
            let dt_log = (lp.values[j].re - lm.values[j].re) / (2.0 * dt);
            let g = d1.values[j].re;
            let r = dt_log + 0.5 * g * g + 0.5 * d2.values[j].re - cfg.potential.eval(x);
            worst = worst.max(r.abs());
        }
        assert!(worst <= 1e-3, "{worst}");
        let r = check_log_heat(&rec, 0.5).unwrap();
        assert!(r.pass && (r.max_residual - worst).abs() <= 1e-3, "{r:?}");
    }

    #[test]
    fn heat_rejects_bad_terminal_data() {
        let h1 = ComplexField::from_real(grid(), 1.0, |x| x);
        assert!(matches!(
            heat_terminal_solve(&h1, &PhysConfig::natural(Potential::Zero), 0.0, 1.0),
            Err(Error::PositivityLost(_))
        ));
    }

    #[test]
    fn kernel_k_modulus_and_symmetry() {
        let cfg = PhysConfig::natural(Potential::Zero);
        for &(y, x) in &[(0.0, 0.0), (1.0, -2.0), (3.5, 0.2)] {
            let k = kernel_k(0.0, y, 1.0, x, &cfg).unwrap();
            assert!((k.norm() - 0.398942280401).abs() < 1e-9);
            assert_eq!(k, kernel_k(0.0, x, 1.0, y, &cfg).unwrap());
        }
        assert!(kernel_k(1.0, 0.0, 1.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn kernel_k_quadrature_reproduces_solver() {
        let (_, rec) = free_packet_record(1.0);
        let out = apply_kernel_k(rec.initial(), 1.0, &rec.config).unwrap();
        assert!(out.l2_distance(rec.last()).unwrap() <= 1e-4);
    }

    #[test]
    fn kernel_p_properties() {
        assert!((kernel_p(0.0, 0.0, 1.0, 0.0).unwrap() - 0.398942280401).abs() < 1e-9);
        let g = grid();
        for tau in [0.1, 1.0, 2.0] {
            let f = ComplexField::from_real(g, 0.0, |x| kernel_p(0.0, 0.3, tau, x).unwrap());
            assert!((crate::grid::quad(&f).re - 1.0).abs() <= 1e-10);
        }
        // Chapman–Kolmogorov through the midpoint.
        for &(y, x) in &[(0.0, 0.0), (-1.0, 0.5), (2.0, -1.0)] {
            let f = ComplexField::from_real(g, 0.0, |z| {
                kernel_p(0.0, y, 0.5, z).unwrap() * kernel_p(0.5, z, 1.0, x).unwrap()
            });
            assert!((crate::grid::quad(&f).re - kernel_p(0.0, y, 1.0, x).unwrap()).abs() <= 1e-8);
        }
        assert!(kernel_p(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn kernel_pq_collapses_to_k() {
        let (_, rec) = free_packet_record(0.6);
        let other = {
            let p = FreePacket::natural(0.7, -0.5);
            let psi0 = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
            schrodinger_evolve(&psi0, &PhysConfig::natural(Potential::Zero), 0.6).unwrap()
        };
        for &(y, x) in &[(0.0, 0.0), (0.4, 1.2), (-1.0, 2.0)] {
            let k = kernel_k(0.0, y, 0.5, x, &rec.config).unwrap();
            for r in [&rec, &other] {
                let pq = kernel_pq(0.0, y, 0.5, x, r).unwrap();
                let psi_t = interp(r.at(0.5).unwrap(), x).unwrap();
                let psi_0 = interp(r.initial(), y).unwrap();
                assert!((psi_t / psi_0 * pq - k).norm() <= 1e-12 * k.norm());
            }
            assert!(
                (kernel_pq(0.0, y, 0.5, x, &rec).unwrap() - kernel_pq(0.0, y, 0.5, x, &other).unwrap()).norm() > 1e-6
            );
        }
    }

    #[test]
    fn kernel_pq_guards_vanishing() {
        let g = Coherent::ground();
        let psi0 = ComplexField::from_fn(grid(), 0.0, |x| g.psi(x, 0.0));
        let rec = schrodinger_evolve(&psi0, &PhysConfig::natural(Potential::harmonic(1.0)), 0.2).unwrap();
        assert!(matches!(kernel_pq(0.0, 0.0, 0.1, 11.0, &rec), Err(Error::Vanishing { .. })));
    }

    #[test]
    fn csv_layout() {
        let (_, rec) = free_packet_record(0.002);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,re,im"));
        assert_eq!(text.lines().count(), 1 + 3 * 1024);
        let mut sparse = Vec::new();
        rec.write_csv_every(&mut sparse, 5).unwrap();
        assert_eq!(String::from_utf8(sparse).unwrap().lines().count(), 1 + 2 * 1024);
        assert!(rec.write_csv_every(Vec::new(), 0).is_err());
    }
}
