//! Nelson kinematic fields extracted from ψ or from a positive heat solution h.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::evolve::{EvolutionRecord, PhysConfig, VANISHING_RATIO};
use crate::grid::{gradient_slice, trapezoid, ComplexField, GridSpec, Order};
use crate::io::fmt_f64;
use crate::report::ResidualReport;

/// Density floor (relative to `max ρ`) for residual norms.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Fields that only exist when the drift comes from a wave function.
#[derive(Debug, Clone, PartialEq)]
pub struct NelsonFields {
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub b_minus: Vec<f64>,
    pub v_q: Vec<Complex64>,
}

/// Drift samples at one time.
///
/// Nodes outside `valid` (where the source field is below the vanishing
/// threshold) carry the value of the nearest valid node.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftFields {
    pub grid: GridSpec,
    pub time: f64,
    pub sigma2: f64,
    pub b_plus: Vec<f64>,
    pub nelson: Option<NelsonFields>,
    /// Inclusive index range of nodes where the drifts were computed.
    pub valid: (usize, usize),
}

impl DriftFields {
    pub fn nelson(&self) -> Result<&NelsonFields> {
        self.nelson.as_ref().ok_or_else(|| Error::Precondition("drift fields carry no wave-function data".into()))
    }

    /// Nodes with `ρ ≥ 1e-8 max ρ` inside the valid range.
    pub fn guarded_nodes(&self) -> Vec<usize> {
        let (lo, hi) = self.valid;
        match &self.nelson {
            Some(n) => {
                let max = n.rho.iter().cloned().fold(0.0, f64::max);
                (lo..=hi).filter(|&j| n.rho[j] >= DENSITY_FLOOR * max).collect()
            }
            None => (lo..=hi).collect(),
        }
    }

    /// CSV `x,rho,u,v,bplus,bminus,re_vq,im_vq`; fields absent for heat drifts are `nan`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,rho,u,v,bplus,bminus,re_vq,im_vq")?;
        for j in 0..self.grid.n_points {
            let x = fmt_f64(self.grid.x(j));
            let bp = fmt_f64(self.b_plus[j]);
            match &self.nelson {
                Some(n) => writeln!(
                    w,
                    "{x},{},{},{},{bp},{},{},{}",
                    fmt_f64(n.rho[j]),
                    fmt_f64(n.u[j]),
                    fmt_f64(n.v[j]),
                    fmt_f64(n.b_minus[j]),
                    fmt_f64(n.v_q[j].re),
                    fmt_f64(n.v_q[j].im)
                )?,
                None => writeln!(w, "{x},nan,nan,nan,{bp},nan,nan,nan")?,
            }
        }
        Ok(())
    }
}

/// Contiguous index range where `mag ≥ ratio · max(mag)`.
///
/// A sub-threshold node strictly inside the range is a nodal point and
/// raises [`Error::Vanishing`].
pub fn valid_interval(grid: &GridSpec, mag: &[f64], ratio: f64) -> Result<(usize, usize)> {
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Vanishing { x: 0.0, magnitude: 0.0 });
    }
    let thr = ratio * max;
    let lo = mag.iter().position(|&m| m >= thr).expect("max is above threshold");
    let hi = mag.iter().rposition(|&m| m >= thr).expect("max is above threshold");
    if let Some(j) = (lo..=hi).find(|&j| mag[j] < thr) {
        return Err(Error::Vanishing { x: grid.x(j), magnitude: mag[j] });
    }
    Ok((lo, hi))
}

fn clamp_tails<T: Copy>(v: &mut [T], (lo, hi): (usize, usize)) {
    let (a, b) = (v[lo], v[hi]);
    v[..lo].iter_mut().for_each(|x| *x = a);
    v[hi + 1..].iter_mut().for_each(|x| *x = b);
}

/// Largest phase step between neighbouring nodes before ψ is treated as
/// having a zero between them.
const MAX_PHASE_STEP: f64 = std::f64::consts::FRAC_PI_2;

/// `log|ψ|` and the unwrapped phase, built from neighbour ratios `ψ_{j+1}/ψ_j`.
fn log_polar(psi: &ComplexField, (lo, hi): (usize, usize)) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = psi.grid.n_points;
    let mut amp = vec![0.0; n];
    let mut phase = vec![0.0; n];
    for j in lo..=hi {
        amp[j] = psi.values[j].norm().ln();
        if j > lo {
            let step = (psi.values[j] / psi.values[j - 1]).arg();
            if step.abs() > MAX_PHASE_STEP {
                let x = 0.5 * (psi.grid.x(j) + psi.grid.x(j - 1));
                return Err(Error::Vanishing { x, magnitude: psi.values[j].norm().min(psi.values[j - 1].norm()) });
            }
            phase[j] = phase[j - 1] + step;
        }
    }
    Ok((amp, phase))
}

/// Gradient restricted to `lo..=hi`, tails clamped.
fn gradient_on(f: &[f64], dx: f64, (lo, hi): (usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    out[lo..=hi].copy_from_slice(&gradient_slice(&f[lo..=hi], dx, Order::Fourth));
    clamp_tails(&mut out, (lo, hi));
    out
}

fn ensure_width(grid: &GridSpec, (lo, hi): (usize, usize)) -> Result<()> {
    if hi - lo + 1 < 6 {
        return Err(Error::Vanishing { x: grid.x(lo), magnitude: 0.0 });
    }
    Ok(())
}

/// All Nelson fields of ψ: `ρ = |ψ|²`, `u = (σ²/2)∇log ρ`,
/// `v = Re[(ħ/mi)∇log ψ]`, `v_q = v − iu`, `b± = v ± u`.
pub fn fields_from_psi(psi: &ComplexField, cfg: &PhysConfig) -> Result<DriftFields> {
    if !psi.is_finite() {
        return Err(Error::NonFinite("wave function".into()));
    }
    let norm = psi.norm_sqr();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm });
    }
    let grid = psi.grid;
    let mag: Vec<f64> = psi.values.iter().map(|v| v.norm()).collect();
    let valid = valid_interval(&grid, &mag, VANISHING_RATIO)?;
    ensure_width(&grid, valid)?;
    let sigma2 = cfg.sigma2();
    let rho: Vec<f64> = psi.values.iter().map(|v| v.norm_sqr()).collect();
    let (amp, phase) = log_polar(psi, valid)?;
    let u: Vec<f64> = gradient_on(&amp, grid.dx(), valid).iter().map(|g| sigma2 * g).collect();
    let v: Vec<f64> = gradient_on(&phase, grid.dx(), valid).iter().map(|g| sigma2 * g).collect();
    let b_plus: Vec<f64> = v.iter().zip(&u).map(|(v, u)| v + u).collect();
    let b_minus = v.iter().zip(&u).map(|(v, u)| v - u).collect();
    let v_q = v.iter().zip(&u).map(|(&v, &u)| Complex64::new(v, -u)).collect();
    Ok(DriftFields {
        grid,
        time: psi.time,
        sigma2,
        b_plus,
        nelson: Some(NelsonFields { rho, u, v, b_minus, v_q }),
        valid,
    })
}

/// Forward drift `∇log h` of the Feynman–Kac diffusion (unit diffusion).
pub fn drift_from_h(h: &ComplexField) -> Result<DriftFields> {
    if let Some(j) = h.values.iter().position(|v| !(v.re > 0.0) || v.im != 0.0) {
        return Err(Error::PositivityLost(format!("h({}) = {}", h.grid.x(j), h.values[j])));
    }
    let grid = h.grid;
    let re: Vec<f64> = h.values.iter().map(|v| v.re).collect();
    let valid = valid_interval(&grid, &re, VANISHING_RATIO)?;
    ensure_width(&grid, valid)?;
    let log_h: Vec<f64> = re.iter().map(|v| v.ln()).collect();
    let b_plus = gradient_on(&log_h, grid.dx(), valid);
    Ok(DriftFields { grid, time: h.time, sigma2: 1.0, b_plus, nelson: None, valid })
}

/// `σ²∇log ρ` on the valid range, from the density alone.
pub fn log_density_gradient(df: &DriftFields, sigma2: f64) -> Result<Vec<f64>> {
    let n = df.nelson()?;
    let log_rho: Vec<f64> = n.rho.iter().map(|r| r.ln()).collect();
    Ok(gradient_on(&log_rho, df.grid.dx(), df.valid).iter().map(|g| sigma2 * g).collect())
}

/// Max over guarded nodes of `|b+ − b− − σ²∇log ρ|`.
pub fn check_nelson_relation(df: &DriftFields, cfg: &PhysConfig) -> Result<ResidualReport> {
    let n = df.nelson()?;
    let target = log_density_gradient(df, cfg.sigma2())?;
    let worst =
        df.guarded_nodes().into_iter().map(|j| (df.b_plus[j] - n.b_minus[j] - target[j]).abs()).fold(0.0, f64::max);
    Ok(ResidualReport::new("nelson_relation", worst, 1e-6, df.grid, None)
        .with_note("nodes with rho < 1e-8 max rho excluded"))
}

/// Max-norm of `∂ρ/∂t + ∇·j` with `j = (ħ/m) Im(ψ̄∇ψ) = vρ`, central differences.
pub fn check_continuity(rec: &EvolutionRecord, t: f64) -> Result<ResidualReport> {
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
    let dx = grid.dx();
    let sigma2 = rec.config.sigma2();
    let psi = &rec.fields[k].values;
    let dpsi = gradient_slice(psi, dx, Order::Fourth);
    let current: Vec<f64> = psi.iter().zip(&dpsi).map(|(p, d)| sigma2 * (p.conj() * d).im).collect();
    let div = gradient_slice(&current, dx, Order::Fourth);
    let (before, after) = (&rec.fields[k - 1].values, &rec.fields[k + 1].values);
    let worst = (0..grid.n_points)
        .map(|j| ((after[j].norm_sqr() - before[j].norm_sqr()) / (2.0 * dt) + div[j]).abs())
        .fold(0.0, f64::max);
    Ok(ResidualReport::new("continuity", worst, 5e-3, grid, Some(dt)))
}

/// `∫ρ dx` of the density carried by `df`.
pub fn total_mass(df: &DriftFields) -> Result<f64> {
    Ok(trapezoid(&df.nelson()?.rho, df.grid.dx()))
}
