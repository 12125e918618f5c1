//! Path functionals: the Girsanov weight `Z`, Feynman–Kac Monte Carlo, the
//! complex weight `Z̃`, its pathwise and endpoint-conditioned representations
//! of ψ, and finite-partition complex measures.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{EvolutionRecord, PhysConfig, Potential};
use crate::grid::{interp, trapezoid, ComplexField};
use crate::io::fmt_f64;
use crate::sde::{path_rng, DriftTable, PathEnsemble, W_MINUS, W_PLUS};
use crate::stats::{cmean_stderr, csum, mean_stderr, sum, Bins};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Girsanov density `Z_t^{t1}` (real, positive).
    Girsanov,
    /// Complex weight `Z̃_{t0}^t`.
    Complex,
}

/// Per-path logarithms of a multiplicative weight over `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSeries {
    pub kind: WeightKind,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub log_weights: Vec<Complex64>,
}

impl WeightSeries {
    pub fn weights(&self) -> Vec<Complex64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn final_weight(&self, i: usize) -> Complex64 {
        self.log_weights[i].exp()
    }
}

/// Table time index for every ensemble time.
pub fn time_lookup(pe: &PathEnsemble, table: &DriftTable) -> Result<Vec<usize>> {
    (0..pe.n_times).map(|k| table.time_index(pe.time(k))).collect()
}

/// `log Z` on `[t_{k1}, t_{k2}]`: `−Σ b_k dw_k − ½ Σ b_k² dt` with
/// `dw_k = x_{k+1} − x_k − b_k dt` and `b_k = b+(x_k, t_k)`.
pub fn girsanov_log_weight(pe: &PathEnsemble, table: &DriftTable, lk: &[usize], i: usize, k1: usize, k2: usize) -> f64 {
    let xs = pe.path(i);
    let dt = pe.dt;
    let mut terms = Vec::with_capacity(2 * (k2 - k1));
    for k in k1..k2 {
        let b = table.b_plus_at(lk[k], xs[k]);
        let dw = xs[k + 1] - xs[k] - b * dt;
        terms.push(-b * dw);
        terms.push(-0.5 * b * b * dt);
    }
    sum(terms)
}

/// Girsanov weights `Z_t^{t1}` of a heat-drift ensemble over its full span.
pub fn girsanov_weight(pe: &PathEnsemble, table: &DriftTable) -> Result<WeightSeries> {
    if table.b_plus.is_empty() {
        return Err(Error::Precondition("missing drift data".into()));
    }
    let lk = time_lookup(pe, table)?;
    let last = pe.n_times - 1;
    let log_weights = (0..pe.n_paths)
        .into_par_iter()
        .map(|i| Complex64::new(girsanov_log_weight(pe, table, &lk, i, 0, last), 0.0))
        .collect();
    Ok(WeightSeries { kind: WeightKind::Girsanov, dt: pe.dt, t_start: pe.t0, t_end: pe.end(), log_weights })
}

/// Trapezoid `∫ V(x(τ)) dτ` over `[t_{k1}, t_{k2}]`.
pub fn potential_integral(xs: &[f64], dt: f64, v: &Potential, k1: usize, k2: usize) -> f64 {
    if k2 == k1 {
        return 0.0;
    }
    let inner = sum((k1 + 1..k2).map(|k| v.eval(xs[k])));
    (inner + 0.5 * (v.eval(xs[k1]) + v.eval(xs[k2]))) * dt
}

/// Pathwise Feynman–Kac identity `h(x(t), t) = h1(x(t1)) exp(−∫V) Z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwiseReport {
    pub check: String,
    pub tolerance: f64,
    pub fraction_within: f64,
    pub required_fraction: f64,
    pub median_error: f64,
    pub max_error: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub pass: bool,
}

impl PathwiseReport {
    fn new(check: &str, mut errors: Vec<f64>, tolerance: f64, required: f64, dt: f64) -> Self {
        let n = errors.len();
        let within = errors.iter().filter(|e| **e <= tolerance).count() as f64 / n.max(1) as f64;
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Greater));
        let median = errors.get(n / 2).copied().unwrap_or(f64::NAN);
        let max = errors.last().copied().unwrap_or(f64::NAN);
        Self {
            check: check.into(),
            tolerance,
            fraction_within: within,
            required_fraction: required,
            median_error: median,
            max_error: max,
            n_paths: n,
            dt,
            pass: n > 0 && within >= required,
        }
    }
}

/// Per-path relative errors of the pathwise Feynman–Kac identity on a
/// heat-drift ensemble started at the record's initial time.
pub fn fk_pathwise_errors(pe: &PathEnsemble, table: &DriftTable, h_rec: &EvolutionRecord) -> Result<Vec<f64>> {
    let lk = time_lookup(pe, table)?;
    let last = pe.n_times - 1;
    let h_start = h_rec.at(pe.t0)?;
    let h_end = h_rec.at(pe.end())?;
    let v = &h_rec.config.potential;
    (0..pe.n_paths)
        .into_par_iter()
        .map(|i| {
            let xs = pe.path(i);
            let lhs = interp(h_start, xs[0])?.re;
            let log_z = girsanov_log_weight(pe, table, &lk, i, 0, last);
            let rhs = interp(h_end, xs[last])?.re * (log_z - potential_integral(xs, pe.dt, v, 0, last)).exp();
            Ok(((rhs - lhs) / lhs).abs())
        })
        .collect()
}

pub fn fk_pathwise_check(pe: &PathEnsemble, table: &DriftTable, h_rec: &EvolutionRecord) -> Result<PathwiseReport> {
    let errors = fk_pathwise_errors(pe, table, h_rec)?;
    Ok(PathwiseReport::new("feynman_kac_pathwise", errors, 2e-2, 0.95, pe.dt))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn within(&self, target: f64, n_stderr: f64) -> bool {
        (self.mean - target).abs() <= n_stderr * self.stderr
    }
}

/// `E[h1(w(t1)) exp(−∫_t^{t1} V(w) dτ)]` over Wiener paths from `(t, x)`.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_estimate(
    x: f64,
    t: f64,
    t1: f64,
    v: &Potential,
    h1: impl Fn(f64) -> f64 + Sync,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Estimate> {
    if n_paths < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 paths, got {n_paths}")));
    }
    if !(t1 > t) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("need t1 > t and dt > 0, got t = {t}, t1 = {t1}, dt = {dt}")));
    }
    let n_steps = (((t1 - t) / dt).round() as usize).max(1);
    let dt = (t1 - t) / n_steps as f64;
    let sd = dt.sqrt();
    let values: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut w = x;
            let mut acc = 0.5 * v.eval(w);
            for k in 1..=n_steps {
                let z: f64 = rng.sample(StandardNormal);
                w += sd * z;
                acc += if k == n_steps { 0.5 } else { 1.0 } * v.eval(w);
            }
            h1(w) * (-acc * dt).exp()
        })
        .collect();
    let (mean, stderr) = mean_stderr(&values);
    Ok(Estimate { mean, stderr, n: n_paths })
}

/// `log Z̃` on `[t_{k1}, t_{k2}]` with the bilateral sums
///
/// `−(i/2σ²)[(1−i)/2 Σ_{k1}^{k2−1} v_q² dt + (1+i)/2 Σ_{k1+1}^{k2} v_q² dt]
///  + (i/σ²)[(1−i)/2 Σ_{k1}^{k2−1} v_q d+x + (1+i)/2 Σ_{k1+1}^{k2} v_q d−x]`,
/// `v_q` evaluated at `(x_k, t_k)`.
pub fn complex_log_weight(
    pe: &PathEnsemble,
    table: &DriftTable,
    lk: &[usize],
    i: usize,
    k1: usize,
    k2: usize,
) -> Result<Complex64> {
    let xs = pe.path(i);
    let dt = pe.dt;
    let inv = 1.0 / pe.sigma2;
    let iu = Complex64::i();
    let mut terms = Vec::with_capacity(2 * (k2 - k1));
    for k in k1..=k2 {
        let vq = table.v_q_at(lk[k], xs[k])?;
        if !vq.is_finite() {
            return Err(Error::Vanishing { x: xs[k], magnitude: f64::NAN });
        }
        if k < k2 {
            terms.push(W_PLUS * (-0.5 * iu * inv * vq * vq * dt + iu * inv * vq * (xs[k + 1] - xs[k])));
        }
        if k > k1 {
            terms.push(W_MINUS * (-0.5 * iu * inv * vq * vq * dt + iu * inv * vq * (xs[k] - xs[k - 1])));
        }
    }
    Ok(csum(terms))
}

/// `Z̃_{t0}^t` for every path of a Nelson ensemble.
pub fn complex_weight(pe: &PathEnsemble, table: &DriftTable, t: f64) -> Result<WeightSeries> {
    let k = pe.index_of(t)?;
    let lk = time_lookup(pe, table)?;
    let log_weights =
        (0..pe.n_paths).into_par_iter().map(|i| complex_log_weight(pe, table, &lk, i, 0, k)).collect::<Result<_>>()?;
    Ok(WeightSeries { kind: WeightKind::Complex, dt: pe.dt, t_start: pe.t0, t_end: t, log_weights })
}

/// `ψ0(x(0)) exp(−(i/ħ)∫V) Z̃` for path `i` up to record time `t`.
fn represented_psi(
    pe: &PathEnsemble,
    ws: &WeightSeries,
    psi0: &ComplexField,
    cfg: &PhysConfig,
    i: usize,
    k: usize,
) -> Result<Complex64> {
    let xs = pe.path(i);
    let phase = -potential_integral(xs, pe.dt, &cfg.potential, 0, k) / cfg.hbar;
    Ok(interp(psi0, xs[0])? * Complex64::from_polar(1.0, phase) * ws.log_weights[i].exp())
}

/// Pathwise representation and modulus-law errors at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexPathwiseReport {
    pub representation: PathwiseReport,
    pub modulus: PathwiseReport,
}

/// Per-path relative errors of `ψ(x(t), t) = ψ0(x(0)) e^{−(i/ħ)∫V} Z̃` and of
/// `|Z̃| = ρ^{1/2}(x(t), t)/ρ0^{1/2}(x(0))`.
pub fn complex_pathwise_check(
    pe: &PathEnsemble,
    ws: &WeightSeries,
    rec: &EvolutionRecord,
    t: f64,
) -> Result<ComplexPathwiseReport> {
    let k = pe.index_of(t)?;
    let psi_t = rec.at(t)?;
    let psi0 = rec.at(pe.t0)?;
    let pairs: Vec<(f64, f64)> = (0..pe.n_paths)
        .into_par_iter()
        .map(|i| {
            let xs = pe.path(i);
            let target = interp(psi_t, xs[k])?;
            let rep = represented_psi(pe, ws, psi0, &rec.config, i, k)?;
            let modulus_target = target.norm() / interp(psi0, xs[0])?.norm();
            let modulus = ws.log_weights[i].re.exp();
            Ok(((rep - target).norm() / target.norm(), (modulus - modulus_target).abs() / modulus_target))
        })
        .collect::<Result<_>>()?;
    Ok(ComplexPathwiseReport {
        representation: PathwiseReport::new(
            "pathwise_representation",
            pairs.iter().map(|p| p.0).collect(),
            5e-2,
            0.95,
            pe.dt,
        ),
        modulus: PathwiseReport::new("modulus_law", pairs.iter().map(|p| p.1).collect(), 5e-2, 0.95, pe.dt),
    })
}

/// One endpoint bin of a complex conditional estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointBin {
    pub center: f64,
    pub count: usize,
    pub estimate: Complex64,
    pub target: Complex64,
    pub stderr: f64,
    /// `|E[target(x) | x ∈ bin] − target(center)|` under the exact density.
    pub binning_bias: f64,
    pub qualifies: bool,
    pub pass: bool,
}

/// Minimum endpoint-bin population for the conditional checks.
pub const MIN_ENDPOINT_COUNT: usize = 200;

fn bin_members(pe: &PathEnsemble, k: usize, bins: &Bins) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); bins.n];
    for i in 0..pe.n_paths {
        if let Some(b) = bins.index(pe.path(i)[k]) {
            members[b].push(i);
        }
    }
    members
}

/// `E[f(x) | x ∈ bin]` under `ρ = |ψ|²` by 32-panel trapezoid quadrature.
fn density_weighted_mean(
    psi: &ComplexField,
    bins: &Bins,
    b: usize,
    f: impl Fn(f64) -> Result<Complex64>,
) -> Result<Complex64> {
    let sub = 32;
    let (a, w) = (bins.edge(b), bins.width() / sub as f64);
    let mut num = Vec::with_capacity(sub + 1);
    let mut den = Vec::with_capacity(sub + 1);
    for s in 0..=sub {
        let x = a + s as f64 * w;
        let r = interp(psi, x)?.norm_sqr();
        num.push(f(x)? * r);
        den.push(r);
    }
    Ok(trapezoid(&num, w) / trapezoid(&den, w))
}

/// Endpoint-binned `E[ψ0(x(0)) e^{−(i/ħ)∫V} Z̃ | x(t) ∈ bin]` against `ψ(center, t)`.
pub fn conditional_representation_check(
    pe: &PathEnsemble,
    ws: &WeightSeries,
    rec: &EvolutionRecord,
    t: f64,
    bins: &Bins,
) -> Result<Vec<EndpointBin>> {
    let k = pe.index_of(t)?;
    let psi_t = rec.at(t)?;
    let psi0 = rec.at(pe.t0)?;
    let members = bin_members(pe, k, bins);
    (0..bins.n)
        .map(|b| {
            let samples: Vec<Complex64> =
                members[b].iter().map(|&i| represented_psi(pe, ws, psi0, &rec.config, i, k)).collect::<Result<_>>()?;
            let c = bins.center(b);
            let target = interp(psi_t, c)?;
            let bias = (density_weighted_mean(psi_t, bins, b, |x| interp(psi_t, x))? - target).norm();
            let (estimate, stderr) = cmean_stderr(&samples);
            let qualifies = samples.len() >= MIN_ENDPOINT_COUNT;
            let pass = qualifies && (estimate - target).norm() <= 3.0 * stderr + bias;
            Ok(EndpointBin {
                center: c,
                count: samples.len(),
                estimate,
                target,
                stderr,
                binning_bias: bias,
                qualifies,
                pass,
            })
        })
        .collect()
}

/// Endpoint-binned modulus check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalVariationReport {
    pub bins: Vec<EndpointBin>,
    /// `ρ^{1/2}(center, t) ∫ρ0^{1/2}` per bin, for comparison only.
    pub product_formula: Vec<f64>,
    pub sqrt_density_integral: f64,
    pub pathwise: PathwiseReport,
}

/// Per-bin mean `|Z̃|` against the bin mean of `ρ^{1/2}(x(t), t)/ρ0^{1/2}(x(0))`,
/// plus the per-path modulus law.
pub fn total_variation_check(
    pe: &PathEnsemble,
    ws: &WeightSeries,
    rec: &EvolutionRecord,
    t: f64,
    bins: &Bins,
) -> Result<TotalVariationReport> {
    let k = pe.index_of(t)?;
    let psi_t = rec.at(t)?;
    let psi0 = rec.at(pe.t0)?;
    let root = psi0.map(|v| Complex64::new(v.norm(), 0.0));
    let sqrt_integral = crate::grid::quad(&root).re;
    let members = bin_members(pe, k, bins);
    let mut out = Vec::with_capacity(bins.n);
    let mut product = Vec::with_capacity(bins.n);
    let mut modulus_errors = Vec::with_capacity(pe.n_paths);
    for (b, idx) in members.iter().enumerate() {
        let mut est = Vec::with_capacity(idx.len());
        let mut tgt = Vec::with_capacity(idx.len());
        for &i in idx {
            let xs = pe.path(i);
            let m = ws.log_weights[i].re.exp();
            let want = interp(psi_t, xs[k])?.norm() / interp(psi0, xs[0])?.norm();
            modulus_errors.push((m - want).abs() / want);
            est.push(m);
            tgt.push(want);
        }
        let c = bins.center(b);
        let (e, se) = mean_stderr(&est);
        let (target, _) = mean_stderr(&tgt);
        let qualifies = est.len() >= MIN_ENDPOINT_COUNT;
        // paired differences carry the relevant noise
        let diffs: Vec<f64> = est.iter().zip(&tgt).map(|(a, b)| a - b).collect();
        let (_, se_diff) = mean_stderr(&diffs);
        let pass = qualifies && (e - target).abs() <= 3.0 * se_diff;
        product.push(interp(psi_t, c)?.norm() * sqrt_integral);
        out.push(EndpointBin {
            center: c,
            count: est.len(),
            estimate: Complex64::new(e, 0.0),
            target: Complex64::new(target, 0.0),
            stderr: se,
            binning_bias: 0.0,
            qualifies,
            pass,
        });
    }
    Ok(TotalVariationReport {
        bins: out,
        product_formula: product,
        sqrt_density_integral: sqrt_integral,
        pathwise: PathwiseReport::new("modulus_law", modulus_errors, 5e-2, 0.95, pe.dt),
    })
}

/// Per endpoint bin: mean of `|Z̃|` and its standard error.
pub fn mean_abs_weight_by_bin(
    pe: &PathEnsemble,
    ws: &WeightSeries,
    t: f64,
    bins: &Bins,
) -> Result<Vec<(f64, usize, f64, f64)>> {
    let k = pe.index_of(t)?;
    let members = bin_members(pe, k, bins);
    Ok((0..bins.n)
        .map(|b| {
            let v: Vec<f64> = members[b].iter().map(|&i| ws.log_weights[i].re.exp()).collect();
            let (m, se) = mean_stderr(&v);
            (bins.center(b), v.len(), m, se)
        })
        .collect())
}

/// CSV `bin_center,count,re_est,im_est,re_target,im_target,stderr`.
pub fn write_bins_csv<W: Write>(bins: &[EndpointBin], mut w: W) -> Result<()> {
    writeln!(w, "bin_center,count,re_est,im_est,re_target,im_target,stderr")?;
    for b in bins {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(b.center),
            b.count,
            fmt_f64(b.estimate.re),
            fmt_f64(b.estimate.im),
            fmt_f64(b.target.re),
            fmt_f64(b.target.im),
            fmt_f64(b.stderr)
        )?;
    }
    Ok(())
}

/// Complex measure on a finite partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePartitionMeasure {
    pub masses: Vec<Complex64>,
}

/// `μ = h |μ|` with `|h| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polar {
    pub phase: Vec<Complex64>,
    pub variation: Vec<f64>,
}

impl Polar {
    pub fn reassemble(&self) -> FinitePartitionMeasure {
        FinitePartitionMeasure { masses: self.phase.iter().zip(&self.variation).map(|(h, v)| h * *v).collect() }
    }
}

impl FinitePartitionMeasure {
    pub fn new(masses: Vec<Complex64>) -> Self {
        Self { masses }
    }

    /// Bin `Σ_{x_i ∈ bin} z_i / n` over endpoint bins.
    pub fn from_binned(endpoints: &[f64], weights: &[Complex64], bins: &Bins) -> Self {
        let n = endpoints.len() as f64;
        let mut cells = vec![Vec::new(); bins.n];
        for (x, z) in endpoints.iter().zip(weights) {
            if let Some(b) = bins.index(*x) {
                cells[b].push(*z / n);
            }
        }
        Self { masses: cells.into_iter().map(csum).collect() }
    }

    pub fn total(&self) -> Complex64 {
        csum(self.masses.iter().copied())
    }

    pub fn total_variation(&self) -> f64 {
        sum(self.masses.iter().map(|m| m.norm()))
    }

    pub fn polar_decompose(&self) -> Polar {
        let phase = self
            .masses
            .iter()
            .map(|m| {
                let r = m.norm();
                if r == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    m / r
                }
            })
            .collect();
        Polar { phase, variation: self.masses.iter().map(|m| m.norm()).collect() }
    }

    /// `λ_k ≥ |μ_k|` for every cell.
    pub fn is_dominated_by(&self, lambda: &[f64]) -> bool {
        lambda.len() == self.masses.len() && self.masses.iter().zip(lambda).all(|(m, l)| *l >= m.norm())
    }
}

pub fn finite_partition_tv(m: &FinitePartitionMeasure) -> f64 {
    m.total_variation()
}

pub fn polar_decompose(m: &FinitePartitionMeasure) -> Polar {
    m.polar_decompose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{heat_terminal_solve, kernel_p, schrodinger_evolve};
    use crate::grid::{Boundary, GridSpec};
    use crate::sde::{simulate_forward, SimParams};
    use crate::states::FreePacket;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::standard(Boundary::DirichletZero)
    }

    fn free_setup(t1: f64, n: usize, seed: u64) -> (EvolutionRecord, DriftTable, PathEnsemble) {
        let p = FreePacket::natural(1.0, 1.0);
        let psi = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
        let rec = schrodinger_evolve(&psi, &PhysConfig::natural(Potential::Zero), t1).unwrap();
        let table = DriftTable::from_schrodinger(&rec).unwrap();
        let pe = simulate_forward(&table, &SimParams::new(n, 1e-3, seed)).unwrap();
        (rec, table, pe)
    }

    #[test]
    fn trivial_girsanov() {
        let one = ComplexField::from_real(grid(), 1.0, |_| 1.0);
        let rec = heat_terminal_solve(&one, &PhysConfig::natural(Potential::Zero), 0.0, 0.2).unwrap();
        let table = DriftTable::from_heat(&rec, 0.0).unwrap();
        let pe = simulate_forward(&table, &SimParams::new(100, 1e-3, 1)).unwrap();
        let ws = girsanov_weight(&pe, &table).unwrap();
        assert!(ws.weights().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
        let est = feynman_kac_estimate(0.0, 0.0, 1.0, &Potential::Zero, |_| 1.0, 100, 1e-2, 1).unwrap();
        assert_eq!((est.mean, est.stderr), (1.0, 0.0));
        assert!(feynman_kac_estimate(0.0, 0.0, 1.0, &Potential::Zero, |_| 1.0, 99, 1e-2, 1).is_err());
    }

    #[test]
    fn girsanov_mean_and_multiplicativity() {
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let h1 = ComplexField::from_real(grid(), 1.0, |x| (-x * x / 2.0).exp());
        let rec = heat_terminal_solve(&h1, &cfg, 0.0, 1.0).unwrap();
        let table = DriftTable::from_heat(&rec, 0.0).unwrap();
        let pe = simulate_forward(&table, &SimParams::new(4000, 1e-3, 3)).unwrap();
        let ws = girsanov_weight(&pe, &table).unwrap();
        let z: Vec<f64> = ws.weights().iter().map(|z| z.re).collect();
        assert!(z.iter().all(|z| *z > 0.0));
        let (m, se) = mean_stderr(&z);
        assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
        let lk = time_lookup(&pe, &table).unwrap();
        for i in 0..10 {
            let whole = girsanov_log_weight(&pe, &table, &lk, i, 0, 1000);
            let split =
                girsanov_log_weight(&pe, &table, &lk, i, 0, 400) + girsanov_log_weight(&pe, &table, &lk, i, 400, 1000);
            assert!((whole.exp() - whole.exp().max(1e-300) * (split - whole).exp()).abs() <= 1e-12 * whole.exp());
        }
    }

    #[test]
    fn constant_potential_factorizes() {
        let c = 0.3;
        let h1 = |y: f64| 1.0 / (1.0 + y * y);
        let est = feynman_kac_estimate(0.5, 0.0, 1.0, &Potential::Constant { value: c }, h1, 20_000, 1e-2, 8).unwrap();
        let f = ComplexField::from_real(grid(), 0.0, |y| kernel_p(0.0, 0.5, 1.0, y).unwrap() * h1(y));
        let want = (-c).exp() * crate::grid::quad(&f).re;
        assert!(est.within(want, 3.0), "{est:?} vs {want}");
    }

    #[test]
    fn complex_weight_multiplicative_and_degenerate() {
        let (_, table, pe) = free_setup(0.1, 20, 4);
        let lk = time_lookup(&pe, &table).unwrap();
        for i in 0..20 {
            let whole = complex_log_weight(&pe, &table, &lk, i, 0, 100).unwrap();
            let split = complex_log_weight(&pe, &table, &lk, i, 0, 37).unwrap()
                + complex_log_weight(&pe, &table, &lk, i, 37, 100).unwrap();
            assert!((whole.exp() - split.exp()).norm() <= 1e-12 * whole.exp().norm());
        }
        let ws = complex_weight(&pe, &table, 0.0).unwrap();
        assert!(ws.weights().iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn ground_state_weight_carries_energy_phase() {
        // v ≡ 0: Z̃ = ψ0(x(t)) / ψ0(x(0)) · exp(−iEt + i∫V)
        let g = crate::states::Coherent::ground();
        let psi = ComplexField::from_fn(grid(), 0.0, |x| g.psi(x, 0.0));
        let cfg = PhysConfig::natural(Potential::harmonic(1.0));
        let rec = schrodinger_evolve(&psi, &cfg, 0.2).unwrap();
        let table = DriftTable::from_schrodinger(&rec).unwrap();
        let pe = simulate_forward(&table, &SimParams::new(2000, 1e-3, 2)).unwrap();
        let ws = complex_weight(&pe, &table, 0.2).unwrap();
        let r = complex_pathwise_check(&pe, &ws, &rec, 0.2).unwrap();
        assert!(r.representation.pass && r.modulus.pass, "{r:?}");
    }

    #[test]
    fn free_packet_pathwise_and_conditional() {
        let (rec, table, pe) = free_setup(0.5, 20_000, 6);
        let ws = complex_weight(&pe, &table, 0.5).unwrap();
        let r = complex_pathwise_check(&pe, &ws, &rec, 0.5).unwrap();
        assert!(r.representation.pass, "{r:?}");
        assert!(r.modulus.pass, "{r:?}");
        let bins = Bins::new(-2.5, 3.5, 24);
        let cb = conditional_representation_check(&pe, &ws, &rec, 0.5, &bins).unwrap();
        let q: Vec<_> = cb.iter().filter(|b| b.qualifies).collect();
        assert!(q.len() >= 10);
        assert!(q.iter().filter(|b| b.pass).count() as f64 >= 0.9 * q.len() as f64, "{cb:?}");
        let tv = total_variation_check(&pe, &ws, &rec, 0.5, &bins).unwrap();
        assert!(tv.pathwise.pass);
        let mut buf = Vec::new();
        write_bins_csv(&cb, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("bin_center,count,re_est,im_est,re_target,im_target,stderr\n"));
    }

    #[test]
    fn short_time_conditional_limit() {
        let (rec, table, pe) = free_setup(0.01, 20_000, 9);
        let real = {
            // real ψ0 variant: zero mean momentum
            let p = FreePacket::natural(1.0, 0.0);
            let psi = ComplexField::from_fn(grid(), 0.0, |x| p.psi(x, 0.0));
            schrodinger_evolve(&psi, &PhysConfig::natural(Potential::Zero), 0.01).unwrap()
        };
        let _ = (rec, table, pe);
        let table = DriftTable::from_schrodinger(&real).unwrap();
        let pe = simulate_forward(&table, &SimParams::new(20_000, 1e-3, 9)).unwrap();
        let ws = complex_weight(&pe, &table, 0.005).unwrap();
        let bins = Bins::new(-2.0, 2.0, 16);
        let cb = conditional_representation_check(&pe, &ws, &real, 0.005, &bins).unwrap();
        for b in cb.iter().filter(|b| b.qualifies) {
            let psi0 = interp(real.initial(), b.center).unwrap();
            assert!((b.estimate - psi0).norm() <= 3.0 * b.stderr + b.binning_bias + (b.target - psi0).norm());
        }
    }

    #[test]
    fn sqrt_density_integral_of_ground_state() {
        let g = crate::states::Coherent::ground();
        let psi = ComplexField::from_fn(grid(), 0.0, |x| g.psi(x, 0.0));
        let root = psi.map(|v| Complex64::new(v.norm(), 0.0));
        let want = std::f64::consts::PI.powf(-0.25) * (2.0 * std::f64::consts::PI).sqrt();
        assert!((crate::grid::quad(&root).re - want).abs() <= 1e-10);
        assert!((want - 1.882792).abs() < 1e-6);
    }

    #[test]
    fn partition_examples() {
        let m = FinitePartitionMeasure::new(vec![Complex64::new(1.0, 0.0), Complex64::i(), Complex64::new(-1.0, 0.0)]);
        assert_eq!(finite_partition_tv(&m), 3.0);
        assert!((m.total() - Complex64::i()).norm() < 1e-15);
        let pos = FinitePartitionMeasure::new(vec![Complex64::new(0.5, 0.0), Complex64::new(2.0, 0.0)]);
        assert_eq!(pos.total_variation(), pos.total().re);
        assert!(polar_decompose(&pos).phase.iter().all(|h| *h == Complex64::new(1.0, 0.0)));
        let zero = FinitePartitionMeasure::new(vec![Complex64::default()]);
        assert_eq!(zero.polar_decompose().phase[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn binned_weight_measure() {
        let (_, table, pe) = free_setup(0.2, 2000, 12);
        let ws = complex_weight(&pe, &table, 0.2).unwrap();
        let ends = pe.column(200);
        let w = ws.weights();
        let bins = Bins::new(-4.0, 5.0, 18);
        let binned = FinitePartitionMeasure::from_binned(&ends, &w, &bins);
        let fine = FinitePartitionMeasure::new(
            ends.iter()
                .zip(&w)
                .filter(|(x, _)| bins.index(**x).is_some())
                .map(|(_, z)| z / ends.len() as f64)
                .collect(),
        );
        let per_bin = mean_abs_weight_by_bin(&pe, &ws, 0.2, &bins).unwrap();
        let abs_mass = sum(per_bin.iter().filter(|b| b.1 > 0).map(|b| b.2 * b.1 as f64 / ends.len() as f64));
        assert!((fine.total_variation() - abs_mass).abs() <= 1e-12);
        assert!(binned.total_variation() <= fine.total_variation() + 1e-15);
        assert!(binned.total().norm() <= binned.total_variation());
    }

    proptest! {
        #[test]
        fn polar_reassembles_exactly(m in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40)) {
            let mu = FinitePartitionMeasure::new(m.iter().map(|&(a, b)| Complex64::new(a, b)).collect());
            let p = mu.polar_decompose();
            let back = p.reassemble();
            for (a, b) in back.masses.iter().zip(&mu.masses) {
                prop_assert!((a - b).norm() <= 4.0 * f64::EPSILON * b.norm());
            }
            prop_assert!(p.phase.iter().all(|h| (h.norm() - 1.0).abs() <= 1e-15));
            prop_assert!(mu.total().norm() <= mu.total_variation() * (1.0 + 1e-12));
        }

        #[test]
        fn total_variation_is_minimal(m in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..3.0), 1..40)) {
            let mu = FinitePartitionMeasure::new(m.iter().map(|&(a, b, _)| Complex64::new(a, b)).collect());
            let lambda: Vec<f64> = mu.masses.iter().zip(&m).map(|(z, e)| z.norm() + e.2).collect();
            prop_assert!(mu.is_dominated_by(&lambda));
            prop_assert!(sum(lambda.iter().copied()) >= mu.total_variation() * (1.0 - 1e-12));
        }
    }
}
