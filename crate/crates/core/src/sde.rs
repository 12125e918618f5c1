//! Euler–Maruyama sampling of Nelson diffusions, reconstruction of the
//! forward, backward and quantum noises, and binned conditional estimates.

use std::io::Write;
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolve::{EvolutionRecord, RecordKind};
use crate::fields::{drift_from_h, fields_from_psi};
use crate::grid::{interp_slice, trapezoid, Boundary, GridSpec};
use crate::io::{fmt_f64, write_paths_le};
use crate::stats::{csum, mean_stderr, sum, Bins, Neumaier};

/// `(1 − i)/2`
pub const W_PLUS: Complex64 = Complex64::new(0.5, -0.5);
/// `(1 + i)/2`
pub const W_MINUS: Complex64 = Complex64::new(0.5, 0.5);

/// Law of the starting positions.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    /// Density sampled on the table grid.
    Density(Vec<f64>),
    Point(f64),
}

/// Drift samples on a uniform time lattice, looked up at the nearest
/// record time and interpolated linearly in space.
#[derive(Debug, Clone)]
pub struct DriftTable {
    pub grid: GridSpec,
    pub sigma2: f64,
    pub times: Vec<f64>,
    pub b_plus: Vec<Vec<f64>>,
    pub b_minus: Option<Vec<Vec<f64>>>,
    pub initial: InitialLaw,
    pub terminal: Option<InitialLaw>,
}

impl DriftTable {
    /// Nelson drifts of a Schrödinger record; start and end laws are `|ψ|²`.
    pub fn from_schrodinger(rec: &EvolutionRecord) -> Result<Self> {
        if rec.kind != RecordKind::Schrodinger {
            return Err(Error::Precondition("expected a Schrödinger record".into()));
        }
        let fields = rec.fields.par_iter().map(|f| fields_from_psi(f, &rec.config)).collect::<Result<Vec<_>>>()?;
        let mut b_plus = Vec::with_capacity(fields.len());
        let mut b_minus = Vec::with_capacity(fields.len());
        for df in fields {
            b_minus.push(df.nelson()?.b_minus.clone());
            b_plus.push(df.b_plus);
        }
        Ok(Self {
            grid: rec.grid.with_boundary(Boundary::ClampDrift),
            sigma2: rec.config.sigma2(),
            times: rec.times.clone(),
            b_plus,
            b_minus: Some(b_minus),
            initial: InitialLaw::Density(rec.initial().density()),
            terminal: Some(InitialLaw::Density(rec.last().density())),
        })
    }

    /// Drift `∇log h` of a heat record, started at `x0`.
    pub fn from_heat(rec: &EvolutionRecord, x0: f64) -> Result<Self> {
        if rec.kind != RecordKind::Heat {
            return Err(Error::Precondition("expected a heat record".into()));
        }
        let b_plus = rec.fields.par_iter().map(|f| drift_from_h(f).map(|d| d.b_plus)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: rec.grid.with_boundary(Boundary::ClampDrift),
            sigma2: 1.0,
            times: rec.times.clone(),
            b_plus,
            b_minus: None,
            initial: InitialLaw::Point(x0),
            terminal: None,
        })
    }

    /// Spatially constant drifts on `n_steps + 1` times.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        grid: GridSpec,
        sigma2: f64,
        t0: f64,
        dt: f64,
        n_steps: usize,
        b_plus: f64,
        b_minus: f64,
        initial: InitialLaw,
    ) -> Self {
        let times = (0..=n_steps).map(|k| t0 + k as f64 * dt).collect();
        let row = |b: f64| vec![vec![b; grid.n_points]; n_steps + 1];
        Self {
            grid: grid.with_boundary(Boundary::ClampDrift),
            sigma2,
            times,
            b_plus: row(b_plus),
            b_minus: Some(row(b_minus)),
            terminal: Some(initial.clone()),
            initial,
        }
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty table")
    }

    pub fn record_dt(&self) -> f64 {
        if self.times.len() < 2 {
            return f64::INFINITY;
        }
        self.times[1] - self.times[0]
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        let (start, end) = (self.start(), self.end());
        let dt = self.record_dt();
        if !(t >= start - 0.5 * dt && t <= end + 0.5 * dt) {
            return Err(Error::OutOfSpan { t, start, end });
        }
        Ok((((t - start) / dt).round().max(0.0) as usize).min(self.times.len() - 1))
    }

    pub fn b_plus_at(&self, k: usize, x: f64) -> f64 {
        interp_slice(&self.grid, &self.b_plus[k], x).unwrap_or(f64::NAN)
    }

    pub fn b_minus_at(&self, k: usize, x: f64) -> Result<f64> {
        let b = self.b_minus.as_ref().ok_or_else(|| Error::Precondition("no backward drift".into()))?;
        Ok(interp_slice(&self.grid, &b[k], x).unwrap_or(f64::NAN))
    }

    /// `v_q = (1−i)/2 b+ + (1+i)/2 b−`.
    pub fn v_q_at(&self, k: usize, x: f64) -> Result<Complex64> {
        Ok(W_PLUS * self.b_plus_at(k, x) + W_MINUS * self.b_minus_at(k, x)?)
    }

    fn sampler(&self, law: &InitialLaw) -> Result<Sampler> {
        match law {
            InitialLaw::Point(x) => Ok(Sampler::Point(*x)),
            InitialLaw::Density(rho) => Sampler::inverse_cdf(&self.grid, rho),
        }
    }
}

enum Sampler {
    Point(f64),
    Cdf { xs: Vec<f64>, cdf: Vec<f64> },
}

impl Sampler {
    /// Piecewise-linear CDF from trapezoid cell masses.
    fn inverse_cdf(grid: &GridSpec, rho: &[f64]) -> Result<Self> {
        if rho.len() != grid.n_points || rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter("initial density must be finite and non-negative".into()));
        }
        let dx = grid.dx();
        let mut cdf = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in rho.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidParameter("initial density has zero mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(Sampler::Cdf { xs: grid.points(), cdf })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Point(x) => *x,
            Sampler::Cdf { xs, cdf } => {
                let u: f64 = rng.gen();
                let j = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[j - 1], cdf[j]);
                let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                xs[j - 1] + f * (xs[j] - xs[j - 1])
            }
        }
    }
}

/// Generator for path `index` under `master_seed`: the master seed picks the
/// key, the path index picks the stream.
pub fn path_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Keep the Gaussian increments `σ√dt ζ`.
    pub store_noise: bool,
}

impl SimParams {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        Self { n_paths, dt, seed, store_noise: false }
    }

    pub fn with_noise(mut self) -> Self {
        self.store_noise = true;
        self
    }
}

/// Trajectories stored row-major, `positions[path * n_times + k]`, always in
/// increasing time whatever the simulation direction.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub direction: Direction,
    pub n_paths: usize,
    pub n_times: usize,
    pub t0: f64,
    pub dt: f64,
    pub sigma2: f64,
    pub master_seed: u64,
    pub positions: Vec<f64>,
    /// Forward runs: `noise[path][k]` drives `[t_k, t_{k+1}]` (w+).
    /// Reverse runs: `noise[path][k]` drives `[t_k, t_{k+1}]` backward (w−).
    pub noise: Option<Vec<f64>>,
    /// Number of steps that left `[-L, L]` and were clamped.
    pub clamp_hits: u64,
}

impl PathEnsemble {
    pub fn path(&self, i: usize) -> &[f64] {
        &self.positions[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn noise_path(&self, i: usize) -> Option<&[f64]> {
        let m = self.n_times - 1;
        self.noise.as_ref().map(|n| &n[i * m..(i + 1) * m])
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n_times - 1)
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if !(k >= 0.0 && (k as usize) < self.n_times) || (self.time(k as usize) - t).abs() > 1e-6 * self.dt {
            return Err(Error::OutOfSpan { t, start: self.t0, end: self.end() });
        }
        Ok(k as usize)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.positions[i * self.n_times + k]).collect()
    }

    /// Little-endian dump: `{n_paths: u64, n_times: u64, dt: f64}` then positions.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_paths_le(w, self.n_paths, self.n_times, self.dt, &self.positions)
    }
}

fn step_count(table: &DriftTable, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt_sde must be positive, got {dt}")));
    }
    let rec_dt = table.record_dt();
    if table.times.len() > 1 && rec_dt > dt * (1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!("record step {rec_dt} exceeds SDE step {dt}")));
    }
    let span = table.end() - table.start();
    let n = ((span / dt).round() as usize).max(1);
    Ok((n, span / n as f64))
}

fn clamp(x: f64, l: f64, hits: &mut u64) -> f64 {
    if x > l {
        *hits += 1;
        l
    } else if x < -l {
        *hits += 1;
        -l
    } else {
        x
    }
}

struct PathOut {
    positions: Vec<f64>,
    noise: Vec<f64>,
    hits: u64,
}

fn run_paths(
    n_paths: usize,
    store_noise: bool,
    f: impl Fn(usize, &mut Vec<f64>, &mut Vec<f64>) -> u64 + Sync,
) -> (Vec<f64>, Option<Vec<f64>>, u64) {
    let outs: Vec<PathOut> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut positions = Vec::new();
            let mut noise = Vec::new();
            let hits = f(i, &mut positions, &mut noise);
            if !store_noise {
                noise = Vec::new();
            }
            PathOut { positions, noise, hits }
        })
        .collect();
    let hits = outs.iter().map(|o| o.hits).sum();
    let mut positions = Vec::with_capacity(outs.iter().map(|o| o.positions.len()).sum());
    let mut noise = store_noise.then(Vec::new);
    for o in outs {
        positions.extend_from_slice(&o.positions);
        if let Some(n) = noise.as_mut() {
            n.extend_from_slice(&o.noise);
        }
    }
    (positions, noise, hits)
}

/// Euler–Maruyama `x_{k+1} = x_k + b+(x_k, t_k) dt + σ√dt ζ_k` from the
/// table's initial law.
pub fn simulate_forward(table: &DriftTable, p: &SimParams) -> Result<PathEnsemble> {
    let (n_steps, dt) = step_count(table, p.dt)?;
    let sampler = table.sampler(&table.initial)?;
    let lookup: Vec<usize> =
        (0..n_steps).map(|k| table.time_index(table.start() + k as f64 * dt)).collect::<Result<_>>()?;
    let scale = (table.sigma2 * dt).sqrt();
    let l = table.grid.half_width;
    let (positions, noise, clamp_hits) = run_paths(p.n_paths, p.store_noise, |i, xs, ns| {
        let mut rng = path_rng(p.seed, i);
        let mut hits = 0;
        let mut x = clamp(sampler.draw(&mut rng), l, &mut hits);
        xs.reserve(n_steps + 1);
        xs.push(x);
        for &kr in &lookup {
            let z: f64 = rng.sample(StandardNormal);
            let dw = scale * z;
            x = clamp(x + table.b_plus_at(kr, x) * dt + dw, l, &mut hits);
            xs.push(x);
            if p.store_noise {
                ns.push(dw);
            }
        }
        hits
    });
    Ok(PathEnsemble {
        direction: Direction::Forward,
        n_paths: p.n_paths,
        n_times: n_steps + 1,
        t0: table.start(),
        dt,
        sigma2: table.sigma2,
        master_seed: p.seed,
        positions,
        noise,
        clamp_hits,
    })
}

/// Reverse-time Euler–Maruyama `x(t − dt) = x(t) − b−(x(t), t) dt − σ√dt ζ`
/// from the table's terminal law.
pub fn simulate_reverse(table: &DriftTable, p: &SimParams) -> Result<PathEnsemble> {
    let (n_steps, dt) = step_count(table, p.dt)?;
    let b_minus = table.b_minus.as_ref().ok_or_else(|| Error::Precondition("no backward drift".into()))?;
    let law = table.terminal.as_ref().ok_or_else(|| Error::Precondition("no terminal law".into()))?;
    let sampler = table.sampler(law)?;
    let lookup: Vec<usize> =
        (1..=n_steps).map(|k| table.time_index(table.start() + k as f64 * dt)).collect::<Result<_>>()?;
    let scale = (table.sigma2 * dt).sqrt();
    let grid = table.grid;
    let l = grid.half_width;
    let (positions, noise, clamp_hits) = run_paths(p.n_paths, p.store_noise, |i, xs, ns| {
        let mut rng = path_rng(p.seed, i);
        let mut hits = 0;
        xs.resize(n_steps + 1, 0.0);
        if p.store_noise {
            ns.resize(n_steps, 0.0);
        }
        let mut x = clamp(sampler.draw(&mut rng), l, &mut hits);
        xs[n_steps] = x;
        for k in (0..n_steps).rev() {
            let z: f64 = rng.sample(StandardNormal);
            let dw = scale * z;
            let b = interp_slice(&grid, &b_minus[lookup[k]], x).unwrap_or(f64::NAN);
            x = clamp(x - b * dt - dw, l, &mut hits);
            xs[k] = x;
            if p.store_noise {
                ns[k] = dw;
            }
        }
        hits
    });
    Ok(PathEnsemble {
        direction: Direction::Reverse,
        n_paths: p.n_paths,
        n_times: n_steps + 1,
        t0: table.start(),
        dt,
        sigma2: table.sigma2,
        master_seed: p.seed,
        positions,
        noise,
        clamp_hits,
    })
}

fn table_lookup(pe: &PathEnsemble, table: &DriftTable) -> Result<Vec<usize>> {
    (0..pe.n_times).map(|k| table.time_index(pe.time(k))).collect()
}

/// Noise increments reconstructed from one path, in units of the standard
/// Wiener process.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    /// `d+w+_k = (x_{k+1} − x_k − b+(x_k, t_k) dt)/σ`, `k = 0..T`.
    pub plus: Vec<f64>,
    /// `d−w−_k = (x_k − x_{k−1} − b−(x_k, t_k) dt)/σ` stored at `k − 1`, `k = 1..=T`.
    pub minus: Vec<f64>,
}

impl Increments {
    /// Bilateral `d_b w_q = (1−i)/2 d+w+ + (1+i)/2 d−w−` at interior `k = 1..T`.
    pub fn bilateral(&self, k: usize) -> Complex64 {
        W_PLUS * self.plus[k] + W_MINUS * self.minus[k - 1]
    }

    /// `(1−i)/2 (d+w+)² − (1+i)/2 (d−w−)²` at interior `k`.
    pub fn bilateral_square(&self, k: usize) -> Complex64 {
        W_PLUS * (self.plus[k] * self.plus[k]) - W_MINUS * (self.minus[k - 1] * self.minus[k - 1])
    }
}

/// Forward and backward noise increments of path `i` from its positions.
pub fn reconstruct_increments(pe: &PathEnsemble, table: &DriftTable, lookup: &[usize], i: usize) -> Result<Increments> {
    let xs = pe.path(i);
    let sigma = pe.sigma2.sqrt();
    let dt = pe.dt;
    let n = pe.n_times;
    let plus = (0..n - 1).map(|k| (xs[k + 1] - xs[k] - table.b_plus_at(lookup[k], xs[k]) * dt) / sigma).collect();
    let minus = (1..n)
        .map(|k| Ok((xs[k] - xs[k - 1] - table.b_minus_at(lookup[k], xs[k])? * dt) / sigma))
        .collect::<Result<_>>()?;
    Ok(Increments { plus, minus })
}

/// Per-path bilateral quantum-noise increments `d_b w_q` at interior times.
pub fn reconstruct_quantum_noise(
    pe: &PathEnsemble,
    table: &DriftTable,
    paths: Range<usize>,
) -> Result<Vec<Vec<Complex64>>> {
    let lookup = table_lookup(pe, table)?;
    paths
        .into_par_iter()
        .map(|i| {
            let inc = reconstruct_increments(pe, table, &lookup, i)?;
            Ok((1..pe.n_times - 1).map(|k| inc.bilateral(k)).collect())
        })
        .collect()
}

/// Ensemble quadratic variation of the quantum noise per unit time.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct QvReport {
    /// Path-averaged `Σ_k` of bilateral squared increments, divided by the elapsed time.
    pub per_unit_time: Complex64,
    pub target: Complex64,
    pub error: f64,
    pub stderr: f64,
    /// Same sum for the forward noise alone (classical, target +1).
    pub forward_per_unit_time: f64,
    pub n_paths: usize,
    pub dt: f64,
}

/// `Σ_k [(1−i)/2 (d+w+_k)² − (1+i)/2 (d−w−_k)²]` over interior times,
/// averaged over paths and divided by `t − t0`; the target is `−i`.
pub fn quadratic_variation(pe: &PathEnsemble, table: &DriftTable) -> Result<QvReport> {
    let lookup = table_lookup(pe, table)?;
    let span = pe.end() - pe.t0;
    let per_path: Vec<(Complex64, f64)> = (0..pe.n_paths)
        .into_par_iter()
        .map(|i| {
            let inc = reconstruct_increments(pe, table, &lookup, i)?;
            let q = csum((1..pe.n_times - 1).map(|k| inc.bilateral_square(k)));
            let f = sum(inc.plus.iter().map(|d| d * d));
            Ok((q / span, f / span))
        })
        .collect::<Result<_>>()?;
    let qs: Vec<Complex64> = per_path.iter().map(|p| p.0).collect();
    let (mean, stderr) = crate::stats::cmean_stderr(&qs);
    let forward = sum(per_path.iter().map(|p| p.1)) / pe.n_paths as f64;
    let target = Complex64::new(0.0, -1.0);
    Ok(QvReport {
        per_unit_time: mean,
        target,
        error: (mean - target).norm(),
        stderr,
        forward_per_unit_time: forward,
        n_paths: pe.n_paths,
        dt: pe.dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    /// `(x_{k+1} − x_k)/dt`, target b+.
    Forward,
    /// `(x_k − x_{k−1})/dt`, target b−.
    Backward,
    /// Forward minus backward, target `σ²∇log ρ = 2u`.
    Difference,
}

/// One bin of a conditional estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BinEstimate {
    pub center: f64,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Drift averaged over the binned samples.
    pub target: f64,
    /// `count ≥ min_count`.
    pub qualifies: bool,
}

impl BinEstimate {
    pub fn within(&self, n_stderr: f64) -> bool {
        (self.mean - self.target).abs() <= n_stderr * self.stderr
    }
}

/// Minimum samples per bin for pass/fail.
pub const MIN_BIN_COUNT: usize = 50;

fn interior_range(pe: &PathEnsemble, window: (f64, f64)) -> Result<Range<usize>> {
    let a = ((window.0 - pe.t0) / pe.dt).round().max(1.0) as usize;
    let b = (((window.1 - pe.t0) / pe.dt).round() as usize).min(pe.n_times - 2);
    if a > b {
        return Err(Error::InvalidParameter(format!("empty time window {window:?}")));
    }
    Ok(a..b + 1)
}

/// Bin-conditional Nelson derivatives, pooled over the interior record
/// times inside `window`. Each bin's target is the drift averaged over the
/// samples that landed in it.
pub fn conditional_drift_estimate(
    pe: &PathEnsemble,
    table: &DriftTable,
    kind: DriftKind,
    window: (f64, f64),
    bins: &Bins,
) -> Result<Vec<BinEstimate>> {
    let ks = interior_range(pe, window)?;
    let lookup = table_lookup(pe, table)?;
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); bins.n];
    let mut targets = vec![Neumaier::default(); bins.n];
    for i in 0..pe.n_paths {
        let xs = pe.path(i);
        for k in ks.clone() {
            let x = xs[k];
            let Some(b) = bins.index(x) else { continue };
            let fwd = (xs[k + 1] - x) / pe.dt;
            let bwd = (x - xs[k - 1]) / pe.dt;
            let (value, target) = match kind {
                DriftKind::Forward => (fwd, table.b_plus_at(lookup[k], x)),
                DriftKind::Backward => (bwd, table.b_minus_at(lookup[k], x)?),
                DriftKind::Difference => (fwd - bwd, table.b_plus_at(lookup[k], x) - table.b_minus_at(lookup[k], x)?),
            };
            samples[b].push(value);
            targets[b].add(target);
        }
    }
    Ok((0..bins.n)
        .map(|b| {
            let n = samples[b].len();
            let (mean, stderr) = mean_stderr(&samples[b]);
            BinEstimate {
                center: bins.center(b),
                count: n,
                mean,
                stderr,
                target: if n > 0 { targets[b].value() / n as f64 } else { f64::NAN },
                qualifies: n >= MIN_BIN_COUNT,
            }
        })
        .collect())
}

/// One bin of a complex conditional mean.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ComplexBin {
    pub center: f64,
    pub count: usize,
    pub mean: Complex64,
    pub stderr: f64,
    pub target: Complex64,
}

/// Which quantum-noise increment to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantumIncrement {
    /// Bilateral `d_b w_q`; conditional mean 0.
    Bilateral,
    /// Forward `d+w_q = (1−i)/2 d+w+ + (1+i)/2 d+w−`; conditional mean `(1+i) u dt/σ`.
    Forward,
}

/// Bin-conditional mean of a quantum-noise increment divided by `dt`,
/// conditioned on `x(t_k)` and pooled over interior times in `window`.
pub fn quantum_noise_conditional_mean(
    pe: &PathEnsemble,
    table: &DriftTable,
    which: QuantumIncrement,
    window: (f64, f64),
    bins: &Bins,
) -> Result<Vec<ComplexBin>> {
    let ks = interior_range(pe, window)?;
    let lookup = table_lookup(pe, table)?;
    let sigma = pe.sigma2.sqrt();
    let dt = pe.dt;
    let mut samples: Vec<Vec<Complex64>> = vec![Vec::new(); bins.n];
    for i in 0..pe.n_paths {
        let xs = pe.path(i);
        for k in ks.clone() {
            let Some(b) = bins.index(xs[k]) else { continue };
            let plus = (xs[k + 1] - xs[k] - table.b_plus_at(lookup[k], xs[k]) * dt) / sigma;
            let other = match which {
                QuantumIncrement::Bilateral => (xs[k] - xs[k - 1] - table.b_minus_at(lookup[k], xs[k])? * dt) / sigma,
                QuantumIncrement::Forward => {
                    (xs[k + 1] - xs[k] - table.b_minus_at(lookup[k + 1], xs[k + 1])? * dt) / sigma
                }
            };
            samples[b].push((W_PLUS * plus + W_MINUS * other) / dt);
        }
    }
    let mid = table.time_index(0.5 * (pe.time(ks.start) + pe.time(ks.end - 1)))?;
    (0..bins.n)
        .map(|b| {
            let c = bins.center(b);
            let target = match which {
                QuantumIncrement::Bilateral => Complex64::default(),
                QuantumIncrement::Forward => {
                    let u = 0.5 * (table.b_plus_at(mid, c) - table.b_minus_at(mid, c)?);
                    Complex64::new(1.0, 1.0) * u / sigma
                }
            };
            let (mean, stderr) = crate::stats::cmean_stderr(&samples[b]);
            Ok(ComplexBin { center: c, count: samples[b].len(), mean, stderr, target })
        })
        .collect()
}

/// CSV `t,bin_center,count,mean_dx_fwd,mean_dx_bwd` at the given interior times.
pub fn write_summary_csv<W: Write>(pe: &PathEnsemble, times: &[f64], bins: &Bins, mut w: W) -> Result<()> {
    writeln!(w, "t,bin_center,count,mean_dx_fwd,mean_dx_bwd")?;
    for &t in times {
        let k = pe.index_of(t)?;
        if k == 0 || k + 1 >= pe.n_times {
            return Err(Error::OutOfSpan { t, start: pe.time(1), end: pe.time(pe.n_times - 2) });
        }
        let mut fwd = vec![Vec::new(); bins.n];
        let mut bwd = vec![Vec::new(); bins.n];
        for i in 0..pe.n_paths {
            let xs = pe.path(i);
            if let Some(b) = bins.index(xs[k]) {
                fwd[b].push(xs[k + 1] - xs[k]);
                bwd[b].push(xs[k] - xs[k - 1]);
            }
        }
        for b in 0..bins.n {
            let count = fwd[b].len();
            let m = |v: &Vec<f64>| if v.is_empty() { f64::NAN } else { sum(v.iter().copied()) / v.len() as f64 };
            writeln!(
                w,
                "{},{},{count},{},{}",
                fmt_f64(t),
                fmt_f64(bins.center(b)),
                fmt_f64(m(&fwd[b])),
                fmt_f64(m(&bwd[b]))
            )?;
        }
    }
    Ok(())
}

/// Probability of each bin under a density sampled on `grid`
/// (16-panel trapezoid per bin on the linear interpolant).
pub fn bin_probabilities(grid: &GridSpec, rho: &[f64], bins: &Bins) -> Vec<f64> {
    let g = grid.with_boundary(Boundary::DirichletZero);
    let sub = 16;
    (0..bins.n)
        .map(|b| {
            let (a, w) = (bins.edge(b), bins.width() / sub as f64);
            let vals: Vec<f64> = (0..=sub).map(|s| interp_slice(&g, rho, a + s as f64 * w).unwrap_or(0.0)).collect();
            trapezoid(&vals, w)
        })
        .collect()
}

/// Symmetric range around the bulk of `rho` holding all but `tail` of its mass.
pub fn bulk_range(grid: &GridSpec, rho: &[f64], tail: f64) -> (f64, f64) {
    let dx = grid.dx();
    let mut cdf = vec![0.0];
    for w in rho.windows(2) {
        cdf.push(cdf.last().unwrap() + 0.5 * (w[0] + w[1]) * dx);
    }
    let total = *cdf.last().unwrap();
    let lo = cdf.iter().position(|&c| c >= 0.5 * tail * total).unwrap_or(0);
    let hi = cdf.iter().position(|&c| c >= (1.0 - 0.5 * tail) * total).unwrap_or(rho.len() - 1);
    (grid.x(lo), grid.x(hi))
}

/// TV distance between the histogram of `xs` and the density `rho`, on
/// `n_bins` bins spanning the bulk (all but 1e-6) of `rho`.
pub fn born_tv(grid: &GridSpec, rho: &[f64], xs: &[f64], n_bins: usize) -> f64 {
    let (lo, hi) = bulk_range(grid, rho, 1e-6);
    let bins = Bins::new(lo, hi, n_bins);
    let probs = bin_probabilities(grid, rho, &bins);
    crate::stats::tv_distance(&bins.counts(xs.iter().copied()), xs.len(), &probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{schrodinger_evolve, PhysConfig, Potential};
    use crate::grid::ComplexField;
    use crate::states::{Coherent, FreePacket};

    fn grid() -> GridSpec {
        GridSpec::standard(Boundary::DirichletZero)
    }

    fn ground_table(t1: f64) -> DriftTable {
        let g = Coherent::ground();
        let psi = ComplexField::from_fn(grid(), 0.0, |x| g.psi(x, 0.0));
        let rec = schrodinger_evolve(&psi, &PhysConfig::natural(Potential::harmonic(1.0)), t1).unwrap();
        DriftTable::from_schrodinger(&rec).unwrap()
    }

    fn gaussian_rho() -> Vec<f64> {
        grid().points().iter().map(|x| (-x * x).exp() / std::f64::consts::PI.sqrt()).collect()
    }

    #[test]
    fn seeds_are_deterministic_and_isolated() {
        let t = ground_table(0.05);
        let a = simulate_forward(&t, &SimParams::new(200, 1e-3, 7)).unwrap();
        let b = simulate_forward(&t, &SimParams::new(200, 1e-3, 7)).unwrap();
        assert_eq!(a.positions, b.positions);
        let c = simulate_forward(&t, &SimParams::new(100, 1e-3, 7)).unwrap();
        assert_eq!(&a.positions[..c.positions.len()], &c.positions[..]);
        let d = simulate_forward(&t, &SimParams::new(200, 1e-3, 8)).unwrap();
        assert_ne!(a.positions, d.positions);
    }

    #[test]
    fn rejects_bad_steps() {
        let t = ground_table(0.01);
        assert!(simulate_forward(&t, &SimParams::new(10, 0.0, 1)).is_err());
        assert!(simulate_forward(&t, &SimParams::new(10, 5e-4, 1)).is_err());
        assert!(t.time_index(1.0).is_err());
    }

    #[test]
    fn sampler_reproduces_density() {
        let s = Sampler::inverse_cdf(&grid(), &gaussian_rho()).unwrap();
        let xs: Vec<f64> = (0..50_000).map(|i| s.draw(&mut path_rng(3, i))).collect();
        assert!(born_tv(&grid(), &gaussian_rho(), &xs, 64) <= 0.03);
        let (m, se) = mean_stderr(&xs);
        assert!(m.abs() <= 3.0 * se);
    }

    #[test]
    fn pure_wiener_variance_and_noise() {
        let n = 1000;
        let t = DriftTable::constant(grid(), 1.0, 0.0, 1e-3, n, 0.0, 0.0, InitialLaw::Point(0.0));
        let pe = simulate_forward(&t, &SimParams::new(20_000, 1e-3, 11).with_noise()).unwrap();
        let end = pe.column(n);
        let var = sum(end.iter().map(|x| x * x)) / end.len() as f64;
        // stderr of the second moment of N(0, 1): sqrt(2/n)
        assert!((var - 1.0).abs() <= 3.0 * (2.0f64 / 20_000.0).sqrt());
        let noise = pe.noise_path(0).unwrap();
        assert_eq!(noise.len(), n);
        assert!((pe.path(0)[1] - pe.path(0)[0] - noise[0]).abs() < 1e-15);

        // disjoint-interval increments are uncorrelated
        let a: Vec<f64> = (0..pe.n_paths).map(|i| pe.noise_path(i).unwrap()[10]).collect();
        let b: Vec<f64> = (0..pe.n_paths).map(|i| pe.noise_path(i).unwrap()[500]).collect();
        let corr = sum(a.iter().zip(&b).map(|(x, y)| x * y))
            / (sum(a.iter().map(|x| x * x)) * sum(b.iter().map(|y| y * y))).sqrt();
        assert!(corr.abs() <= 3.0 / (pe.n_paths as f64).sqrt());
    }

    #[test]
    fn pure_wiener_quadratic_variation() {
        let n = 1000;
        let t = DriftTable::constant(grid(), 1.0, 0.0, 1e-3, n, 0.0, 0.0, InitialLaw::Point(0.0));
        let pe = simulate_forward(&t, &SimParams::new(2000, 1e-3, 5)).unwrap();
        let qv = quadratic_variation(&pe, &t).unwrap();
        assert!((qv.forward_per_unit_time - 1.0).abs() <= 0.01);
        assert!(qv.error <= 0.01 + 3.0 * qv.stderr, "{qv:?}");
        assert!(qv.error == (qv.per_unit_time - qv.target).norm());
        // zero osmotic drift: both noise terms are the same path increments
        let inc = reconstruct_increments(&pe, &t, &table_lookup(&pe, &t).unwrap(), 0).unwrap();
        assert_eq!(inc.plus[1..], inc.minus[1..]);
    }

    #[test]
    fn ground_state_ensemble() {
        let t = ground_table(1.0);
        let pe = simulate_forward(&t, &SimParams::new(20_000, 1e-3, 21)).unwrap();
        let rho = gaussian_rho();
        assert!(born_tv(&grid(), &rho, &pe.column(pe.n_times - 1), 64) <= 0.05);
        assert_eq!(pe.clamp_hits, 0);
        let bins = Bins::new(-1.5, 1.5, 12);
        let fwd = conditional_drift_estimate(&pe, &t, DriftKind::Forward, (0.0, 1.0), &bins).unwrap();
        let ok = fwd.iter().filter(|b| b.qualifies && b.within(3.0)).count();
        assert!(ok as f64 >= 0.9 * fwd.iter().filter(|b| b.qualifies).count() as f64);
        // b+ = −x averaged over the bin: within half a bin of −center, pulled toward the peak
        let half = 0.5 * (bins.hi - bins.lo) / bins.n as f64;
        for b in &fwd {
            let shift = b.target + b.center;
            assert!(shift.abs() <= half);
            assert!(b.center.abs() < half || shift * b.center > 0.0, "{b:?}");
        }
        let qn = quantum_noise_conditional_mean(&pe, &t, QuantumIncrement::Bilateral, (0.0, 1.0), &bins).unwrap();
        let ok = qn.iter().filter(|b| (b.mean - b.target).norm() <= 3.0 * b.stderr).count();
        assert!(ok >= 10, "{qn:?}");
    }

    #[test]
    fn reverse_ground_state() {
        let t = ground_table(1.0);
        let pe = simulate_reverse(&t, &SimParams::new(20_000, 1e-3, 4).with_noise()).unwrap();
        assert_eq!(pe.direction, Direction::Reverse);
        assert!(born_tv(&grid(), &gaussian_rho(), &pe.column(0), 64) <= 0.05);
        let bins = Bins::new(-1.5, 1.5, 12);
        let bwd = conditional_drift_estimate(&pe, &t, DriftKind::Backward, (0.0, 1.0), &bins).unwrap();
        let ok = bwd.iter().filter(|b| b.qualifies && b.within(3.0)).count();
        assert!(ok >= 10, "{bwd:?}");
        // x(t_k) and x(t_{k+1}) lag-1 correlation of stationary OU
        let a = pe.column(500);
        let b = pe.column(501);
        let c = sum(a.iter().zip(&b).map(|(x, y)| x * y)) / sum(a.iter().map(|x| x * x));
        assert!((c - (-1e-3f64).exp()).abs() <= 3e-3);
    }

    #[test]
    fn reverse_zero_drift_increments_are_centered() {
        let n = 200;
        let t = DriftTable::constant(grid(), 1.0, 0.0, 1e-3, n, 0.0, 0.0, InitialLaw::Point(0.3));
        let pe = simulate_reverse(&t, &SimParams::new(5000, 1e-3, 9)).unwrap();
        let d: Vec<f64> = (0..pe.n_paths).map(|i| pe.path(i)[100] - pe.path(i)[99]).collect();
        let (m, se) = mean_stderr(&d);
        assert!(m.abs() <= 3.0 * se);
        assert!(pe.path(0)[n] == 0.3);
    }

    #[test]
    fn free_packet_mean_transport() {
        let p = FreePacket::natural(1.0, 1.0);
        let psi = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
        let rec = schrodinger_evolve(&psi, &PhysConfig::natural(Potential::Zero), 1.0).unwrap();
        let t = DriftTable::from_schrodinger(&rec).unwrap();
        let pe = simulate_forward(&t, &SimParams::new(10_000, 1e-3, 2)).unwrap();
        for k in [0, 500, 1000] {
            let (m, se) = mean_stderr(&pe.column(k));
            assert!((m - pe.time(k)).abs() <= 3.0 * se, "k = {k}: {m}");
        }
    }

    #[test]
    fn summary_csv_and_binary() {
        let t = ground_table(0.01);
        let pe = simulate_forward(&t, &SimParams::new(50, 1e-3, 1)).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&pe, &[0.005], &Bins::new(-2.0, 2.0, 4), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(write_summary_csv(&pe, &[0.0], &Bins::new(-2.0, 2.0, 4), Vec::new()).is_err());
        let mut bin = Vec::new();
        pe.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 24 + 8 * 50 * 11);
    }

    #[test]
    fn quantum_noise_rows() {
        let t = ground_table(0.01);
        let pe = simulate_forward(&t, &SimParams::new(3, 1e-3, 1)).unwrap();
        let q = reconstruct_quantum_noise(&pe, &t, 0..3).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q[0].len(), pe.n_times - 2);
    }
}
