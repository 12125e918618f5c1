//! Verification suites: named groups of pass/fail checks with their
//! measured values and tolerances.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{
    check_log_heat, heat_terminal_solve, kernel_k, kernel_pq, schrodinger_evolve, EvolutionRecord, PhysConfig,
    Potential,
};
use crate::fields::{check_continuity, check_nelson_relation, fields_from_psi};
use crate::grid::{gradient, interp, laplacian, Boundary, ComplexField, GridSpec};
use crate::operators::{
    apply, ground_state_transform_check, hj_theta_check, kernel_pq_bdg_check, lemma1_check, theorem2_conjugation_check,
    OperatorHandle, OperatorKind, TestFunction,
};
use crate::pathfunc::{
    complex_log_weight, complex_pathwise_check, complex_weight, conditional_representation_check, feynman_kac_estimate,
    fk_pathwise_check, girsanov_log_weight, mean_abs_weight_by_bin, time_lookup, total_variation_check,
    FinitePartitionMeasure, PathwiseReport, MIN_ENDPOINT_COUNT,
};
use crate::report::ResidualReport;
use crate::scenario::{Scenario, ScenarioId};
use crate::sde::{
    born_tv, bulk_range, conditional_drift_estimate, quadratic_variation, quantum_noise_conditional_mean,
    simulate_forward, DriftKind, DriftTable, PathEnsemble, QuantumIncrement, SimParams, W_MINUS, W_PLUS,
};
use crate::states::{Coherent, FreePacket};
use crate::stats::Bins;
use crate::trotter::{
    convergence_ratios, convergence_scan, prop7_independence, prop7_kernel_check, trotter_step_quantum, TrotterKind,
    TrotterOptions, TrotterRun,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One pass/fail line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Cmp,
    pub pass: bool,
    /// Informational checks do not affect the suite verdict.
    pub required: bool,
    pub detail: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            comparison: Cmp::AtMost,
            pass: value <= tolerance,
            required: true,
            detail: String::new(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            comparison: Cmp::AtLeast,
            pass: value >= tolerance,
            required: true,
            detail: String::new(),
        }
    }

    pub fn from_report(r: &ResidualReport) -> Self {
        Self::at_most(r.check.clone(), r.max_residual, r.tolerance).with_detail(r.notes.join("; "))
    }

    pub fn from_pathwise(r: &PathwiseReport) -> Self {
        Self::at_least(r.check.clone(), r.fraction_within, r.required_fraction).with_detail(format!(
            "relative tolerance {:e}, median error {:.3e}, max error {:.3e}, {} paths, dt {:e}",
            r.tolerance, r.median_error, r.max_error, r.n_paths, r.dt
        ))
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn informational(mut self) -> Self {
        self.required = false;
        self
    }

    /// Overrides the verdict (for compound criteria).
    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub scenario: Option<String>,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn new(suite: &str, scenario: Option<&Scenario>, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass || !c.required);
        Self { suite: suite.into(), scenario: scenario.map(|s| s.id.name().to_string()), pass, checks }
    }
}

/// Sampling parameters shared by the stochastic suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteParams {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Wiener paths for the Feynman–Kac expectation.
    pub fk_paths: usize,
    pub n_bins: usize,
}

impl SuiteParams {
    pub fn new(seed: u64) -> Self {
        Self { n_paths: 50_000, dt: 1e-3, seed, fk_paths: 100_000, n_bins: 64 }
    }

    fn sim(&self) -> SimParams {
        SimParams::new(self.n_paths, self.dt, self.seed)
    }
}

pub const SUITES: [&str; 15] = [
    "grid",
    "evolve",
    "fields",
    "sde",
    "born",
    "drifts",
    "qv",
    "operators",
    "pathfunc",
    "pathwise",
    "feynman_kac",
    "negative",
    "measures",
    "trotter",
    "kernels",
];

/// Suites run by `all`; together they cover every check once.
pub const ALL: [&str; 8] = ["grid", "evolve", "fields", "sde", "operators", "pathfunc", "trotter", "kernels"];

fn std_grid() -> GridSpec {
    GridSpec::standard(Boundary::DirichletZero)
}

fn schrodinger_defaults() -> Vec<Scenario> {
    [ScenarioId::FreePacket, ScenarioId::HarmonicGround, ScenarioId::HarmonicCoherent]
        .into_iter()
        .map(Scenario::standard)
        .collect()
}

/// Runs one named suite (or `all`). Without a scenario, each suite uses its defaults.
pub fn run_suite(name: &str, scenario: Option<&Scenario>, p: &SuiteParams) -> Result<Vec<SuiteReport>> {
    let pick = |defaults: Vec<Scenario>| -> Vec<Scenario> {
        match scenario {
            Some(s) => vec![s.clone()],
            None => defaults,
        }
    };
    let ground = || vec![Scenario::standard(ScenarioId::HarmonicGround)];
    let per =
        |name: &str, list: Vec<Scenario>, f: &dyn Fn(&Scenario) -> Result<Vec<Check>>| -> Result<Vec<SuiteReport>> {
            list.iter().map(|s| Ok(SuiteReport::new(name, Some(s), f(s)?))).collect()
        };
    match name {
        "all" => {
            let mut out = Vec::new();
            for s in ALL {
                out.extend(run_suite(s, scenario, p)?);
            }
            Ok(out)
        }
        "grid" => Ok(vec![SuiteReport::new("grid", None, grid_checks()?)]),
        "evolve" => {
            let mut list = pick(schrodinger_defaults());
            if scenario.is_none() {
                list.push(Scenario::standard(ScenarioId::OuFeynmanKac));
            }
            per("evolve", list, &evolve_checks)
        }
        "fields" => per("fields", pick(schrodinger_defaults()), &fields_checks),
        "sde" => per("sde", pick(ground()), &|s| {
            let mut c = vec![determinism_check(s, p)?, born_check(s, p)?];
            c.extend(drift_checks(s, p)?);
            c.extend(qv_checks(s, p)?);
            c.extend(fqn_checks(s, p)?);
            Ok(c)
        }),
        "born" => {
            let defaults =
                vec![Scenario::standard(ScenarioId::FreePacket), Scenario::standard(ScenarioId::HarmonicCoherent)];
            per("born", pick(defaults), &|s| Ok(vec![born_check(s, p)?]))
        }
        "drifts" => per("drifts", pick(ground()), &|s| drift_checks(s, p)),
        "qv" => per("qv", pick(ground()), &|s| qv_checks(s, p)),
        "operators" => Ok(vec![SuiteReport::new("operators", None, operator_checks()?)]),
        "pathwise" => per("pathwise", pick(vec![Scenario::standard(ScenarioId::FreePacket)]), &|s| {
            feynman_integral_checks(s, 0.5f64.min(s.t_end), p)
        }),
        "feynman_kac" => Ok(vec![SuiteReport::new("feynman_kac", None, feynman_kac_checks(p)?)]),
        "negative" => {
            let mut c = fqn_checks(&Scenario::standard(ScenarioId::HarmonicGround), p)?;
            c.push(solution_dependence_check(p)?);
            Ok(vec![SuiteReport::new("negative", None, c)])
        }
        "measures" => Ok(vec![SuiteReport::new("measures", None, measure_checks(p.seed))]),
        "pathfunc" => {
            let free = Scenario::standard(ScenarioId::FreePacket);
            let s = scenario.cloned().unwrap_or(free);
            let mut c = multiplicativity_checks(p)?;
            c.extend(feynman_integral_checks(&s, 0.5f64.min(s.t_end), p)?);
            c.extend(feynman_kac_checks(p)?);
            c.push(solution_dependence_check(p)?);
            c.extend(measure_checks(p.seed));
            Ok(vec![SuiteReport::new("pathfunc", Some(&s), c)])
        }
        "trotter" => Ok(vec![SuiteReport::new("trotter", None, trotter_checks()?)]),
        "kernels" => Ok(vec![SuiteReport::new("kernels", None, kernel_checks()?)]),
        other => Err(Error::InvalidParameter(format!("unknown suite {other:?}; expected one of {SUITES:?} or all"))),
    }
}

// ---------------------------------------------------------------- grid

pub fn grid_checks() -> Result<Vec<Check>> {
    let g = std_grid();
    let c = ComplexField::from_real(g, 0.0, |_| 3.7);
    let annihilate = gradient(&c)?.max_abs().max(laplacian(&c)?.max_abs());
    // f = e^{−x²/2}: |f''''| ≤ 3
    let f = ComplexField::from_real(g, 0.0, |x| (-x * x / 2.0).exp());
    let lap = laplacian(&f)?;
    let dd = gradient(&gradient(&f)?)?;
    let n = g.n_points;
    let diff = (2..n - 2).map(|j| (lap.values[j] - dd.values[j]).norm()).fold(0.0, f64::max);
    let dx = g.dx();
    let rec = Scenario::standard(ScenarioId::FreePacket).schrodinger_record()?;
    let drift = rec.fields.iter().map(|f| (f.norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("constants_annihilated", annihilate, 16.0 * f64::EPSILON * 3.7 / (dx * dx))
            .with_detail("tolerance 16 eps |c| / dx^2"),
        Check::at_most("laplacian_vs_double_gradient", diff, 0.5 * 3.0 * dx * dx)
            .with_detail("tolerance dx^2 max|f''''|/2"),
        Check::at_most("norm_conserved", drift, 1e-8),
    ])
}

// ---------------------------------------------------------------- evolve

pub fn evolve_checks(s: &Scenario) -> Result<Vec<Check>> {
    s.validate()?;
    let name = |c: &str| format!("{c}[{}]", s.id.name());
    if s.is_heat() {
        let rec = s.heat_record()?;
        let mid = rec.times[rec.len() / 2];
        let mut out = vec![Check::from_report(&check_log_heat(&rec, mid)?).renamed(name("log_heat"))];
        if let (Potential::Harmonic { stiffness, center: 0.0 }, crate::scenario::InitialState::HeatTerminal { width }) =
            (&s.physics.potential, &s.state)
        {
            if *stiffness == 1.0 && *width == 1.0 {
                let exact = ComplexField::from_real(s.grid, 0.0, |x| (-0.5 * s.t_end).exp() * (-x * x / 2.0).exp());
                let err =
                    rec.initial().values.iter().zip(&exact.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                out.push(Check::at_most(name("eigenfunction"), err, 1e-5));
            }
        }
        return Ok(out);
    }
    let rec = s.schrodinger_record()?;
    let n0 = rec.initial().norm_sqr();
    let drift = rec.fields.iter().map(|f| (f.norm_sqr() - n0).abs() / n0).fold(0.0, f64::max) / s.t_end;
    let mut out = vec![Check::at_most(name("unitarity_per_unit_time"), drift, 1e-8)];
    if s.exact(0.0, 0.0).is_some() {
        let exact = ComplexField::from_fn(s.grid, s.t_end, |x| s.exact(x, s.t_end).expect("closed form"));
        out.push(Check::at_most(name("closed_form_l2"), rec.last().l2_distance(&exact)?, 1e-4));
    }
    let back_in = ComplexField { time: 0.0, ..rec.last().map(|v| v.conj()) };
    let back = schrodinger_evolve(&back_in, &s.physics, s.t_end)?;
    let ret = ComplexField { time: 0.0, ..back.last().map(|v| v.conj()) };
    out.push(Check::at_most(name("time_reversal"), ret.l2_distance(rec.initial())?, 2e-4));
    if s.is_stationary() {
        let m0 = rec.initial();
        let worst = rec
            .fields
            .iter()
            .flat_map(|f| f.values.iter().zip(&m0.values).map(|(a, b)| (a.norm() - b.norm()).abs()))
            .fold(0.0, f64::max);
        out.push(Check::at_most(name("static_modulus"), worst, 1e-6));
    }
    Ok(out)
}

// ---------------------------------------------------------------- fields

pub fn fields_checks(s: &Scenario) -> Result<Vec<Check>> {
    let rec = s.schrodinger_record()?;
    let name = |c: &str| format!("{c}[{}]", s.id.name());
    let ks = [0, rec.len() / 2, rec.len() - 1];
    let (mut nelson, mut vq, mut phase) = (0.0f64, 0.0f64, 0.0f64);
    let rot = Complex64::from_polar(1.0, 1.234);
    for &k in &ks {
        let df = fields_from_psi(&rec.fields[k], &rec.config)?;
        nelson = nelson.max(check_nelson_relation(&df, &rec.config)?.max_residual);
        let n = df.nelson()?;
        for j in df.guarded_nodes() {
            let want = W_PLUS * df.b_plus[j] + W_MINUS * n.b_minus[j];
            vq = vq.max((n.v_q[j] - want).norm() / (1.0 + want.norm()));
        }
        let dr = fields_from_psi(&rec.fields[k].map(|v| v * rot), &rec.config)?;
        let nr = dr.nelson()?;
        for j in 0..df.grid.n_points {
            phase = phase
                .max((dr.b_plus[j] - df.b_plus[j]).abs())
                .max((nr.b_minus[j] - n.b_minus[j]).abs())
                .max((nr.v_q[j] - n.v_q[j]).norm());
        }
    }
    let cont = check_continuity(&rec, rec.times[rec.len() / 2])?;
    Ok(vec![
        Check::at_most(name("nelson_relation"), nelson, 1e-6),
        Check::at_most(name("v_q_identity"), vq, 1e-12),
        Check::at_most(name("global_phase_invariance"), phase, 1e-10),
        Check::from_report(&cont).renamed(name("continuity")),
    ])
}

// ---------------------------------------------------------------- sde

fn nelson_ensemble(s: &Scenario, p: &SuiteParams) -> Result<(EvolutionRecord, DriftTable, PathEnsemble)> {
    let rec = s.schrodinger_record()?;
    let table = DriftTable::from_schrodinger(&rec)?;
    let pe = simulate_forward(&table, &p.sim())?;
    Ok((rec, table, pe))
}

pub fn determinism_check(s: &Scenario, p: &SuiteParams) -> Result<Check> {
    let short = s.clone().with_t_end(0.05f64.min(s.t_end));
    let rec = short.schrodinger_record()?;
    let table = DriftTable::from_schrodinger(&rec)?;
    let sim = SimParams::new(500, p.dt, p.seed);
    let a = simulate_forward(&table, &sim)?;
    let b = simulate_forward(&table, &sim)?;
    let same = a.positions.iter().zip(&b.positions).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok(Check::at_least(format!("seed_determinism[{}]", s.id.name()), if same { 1.0 } else { 0.0 }, 1.0))
}

/// Terminal histogram against `|ψ(·, t_end)|²`.
pub fn born_check(s: &Scenario, p: &SuiteParams) -> Result<Check> {
    let (rec, _, pe) = nelson_ensemble(s, p)?;
    let rho = rec.last().density();
    let tv = born_tv(&rec.grid, &rho, &pe.column(pe.n_times - 1), p.n_bins);
    Ok(Check::at_most(format!("born_tv[{}]", s.id.name()), tv, 0.05).with_detail(format!(
        "n = {}, {} bins, t = {}, clamp hits {}",
        pe.n_paths,
        p.n_bins,
        pe.end(),
        pe.clamp_hits
    )))
}

fn drift_window(s: &Scenario, pe: &PathEnsemble) -> (f64, f64) {
    if s.is_stationary() {
        (pe.t0, pe.end())
    } else {
        let mid = 0.5 * (pe.t0 + pe.end());
        let half = 0.05 * (pe.end() - pe.t0);
        (mid - half, mid + half)
    }
}

fn bulk_bins(rec: &EvolutionRecord, t: f64, n: usize, tail: f64) -> Result<Bins> {
    let rho = rec.at(t)?.density();
    let (lo, hi) = bulk_range(&rec.grid, &rho, tail);
    Ok(Bins::new(lo, hi, n))
}

/// Bin-conditional forward, backward and forward-minus-backward drifts.
pub fn drift_checks(s: &Scenario, p: &SuiteParams) -> Result<Vec<Check>> {
    let (rec, table, pe) = nelson_ensemble(s, p)?;
    let window = drift_window(s, &pe);
    let bins = bulk_bins(&rec, 0.5 * (window.0 + window.1), 16, 1e-3)?;
    [
        (DriftKind::Difference, "nelson_difference"),
        (DriftKind::Forward, "forward_drift"),
        (DriftKind::Backward, "backward_drift"),
    ]
    .into_iter()
    .map(|(kind, label)| {
        let est = conditional_drift_estimate(&pe, &table, kind, window, &bins)?;
        let q: Vec<_> = est.iter().filter(|b| b.qualifies).collect();
        let ok = q.iter().filter(|b| b.within(3.0)).count();
        let frac = ok as f64 / q.len().max(1) as f64;
        Ok(Check::at_least(format!("{label}[{}]", s.id.name()), frac, 0.9)
            .with_pass(!q.is_empty() && frac >= 0.9)
            .with_detail(format!("{ok}/{} qualifying bins within 3 stderr, window {window:?}", q.len())))
    })
    .collect()
}

/// Quantum-noise QV per unit time at `dt`, and the error ratio when `dt` halves.
pub fn qv_checks(s: &Scenario, p: &SuiteParams) -> Result<Vec<Check>> {
    let run = |dt: f64| -> Result<crate::sde::QvReport> {
        let sc = s.clone().with_dt(dt);
        let rec = sc.schrodinger_record()?;
        let table = DriftTable::from_schrodinger(&rec)?;
        let pe = simulate_forward(&table, &SimParams::new(p.n_paths, dt, p.seed))?;
        quadratic_variation(&pe, &table)
    };
    let a = run(p.dt)?;
    let b = run(0.5 * p.dt)?;
    let noise = 3.0 * (b.stderr * b.stderr + 0.25 * a.stderr * a.stderr).sqrt();
    let off = (b.error - 0.5 * a.error).abs();
    Ok(vec![
        Check::at_most(format!("quantum_qv[{}]", s.id.name()), a.error, 0.02).with_detail(format!(
            "mean {:.6} {:+.6}i, stderr {:.2e}, forward QV {:.6}, dt {:e}",
            a.per_unit_time.re, a.per_unit_time.im, a.stderr, a.forward_per_unit_time, a.dt
        )),
        Check::at_most(format!("quantum_qv_halving[{}]", s.id.name()), off, noise).with_detail(format!(
            "error {:.3e} at dt {:e}, {:.3e} at dt {:e} (ratio {:.2}); |e2 − e1/2| vs 3 combined stderr",
            a.error,
            a.dt,
            b.error,
            b.dt,
            a.error / b.error
        )),
    ])
}

/// Nonzero forward conditional mean of `d+w_q` where `|u|` is large, and its
/// agreement with `(1+i)u/σ`.
pub fn fqn_checks(s: &Scenario, p: &SuiteParams) -> Result<Vec<Check>> {
    let (rec, table, pe) = nelson_ensemble(s, p)?;
    let window = drift_window(s, &pe);
    let bins = bulk_bins(&rec, 0.5 * (window.0 + window.1), 16, 1e-3)?;
    let est = quantum_noise_conditional_mean(&pe, &table, QuantumIncrement::Forward, window, &bins)?;
    let q: Vec<_> = est.iter().filter(|b| b.count >= crate::sde::MIN_BIN_COUNT).collect();
    let u_max = q.iter().map(|b| b.target.norm()).fold(0.0, f64::max);
    let large: Vec<_> = q.iter().filter(|b| b.target.norm() >= 0.5 * u_max && u_max > 0.0).collect();
    let detected = large.iter().filter(|b| b.mean.norm() > 3.0 * b.stderr).count();
    let matched = q.iter().filter(|b| (b.mean - b.target).norm() <= 3.0 * b.stderr).count();
    let frac = matched as f64 / q.len().max(1) as f64;
    Ok(vec![
        Check::at_least(format!("fqn_detected[{}]", s.id.name()), detected as f64, large.len() as f64)
            .with_pass(!large.is_empty() && detected == large.len())
            .with_detail(format!("{detected}/{} bins with |u| ≥ max|u|/2 have |mean| > 3 stderr", large.len())),
        Check::at_least(format!("fqn_matches_target[{}]", s.id.name()), frac, 0.9)
            .with_detail(format!("{matched}/{} qualifying bins within 3 stderr of (1+i)u/sigma", q.len())),
    ])
}

// ---------------------------------------------------------------- pathfunc

/// Exact splitting of `Z` and `Z̃` at an interior time.
pub fn multiplicativity_checks(p: &SuiteParams) -> Result<Vec<Check>> {
    let ou = Scenario::standard(ScenarioId::OuFeynmanKac).with_t_end(0.2);
    let h = ou.heat_record()?;
    let ht = DriftTable::from_heat(&h, 0.0)?;
    let hp = simulate_forward(&ht, &SimParams::new(50, p.dt, p.seed))?;
    let lk = time_lookup(&hp, &ht)?;
    let (mid, last) = (hp.n_times / 3, hp.n_times - 1);
    let mut z = 0.0f64;
    for i in 0..hp.n_paths {
        let whole = girsanov_log_weight(&hp, &ht, &lk, i, 0, last).exp();
        let split = girsanov_log_weight(&hp, &ht, &lk, i, 0, mid).exp()
            * girsanov_log_weight(&hp, &ht, &lk, i, mid, last).exp();
        z = z.max((whole - split).abs() / whole);
    }
    let free = Scenario::standard(ScenarioId::FreePacket).with_t_end(0.2);
    let (_, table, pe) = nelson_ensemble(&free, &SuiteParams { n_paths: 50, ..*p })?;
    let lk = time_lookup(&pe, &table)?;
    let (mid, last) = (pe.n_times / 3, pe.n_times - 1);
    let mut zt = 0.0f64;
    for i in 0..pe.n_paths {
        let whole = complex_log_weight(&pe, &table, &lk, i, 0, last)?.exp();
        let split = complex_log_weight(&pe, &table, &lk, i, 0, mid)?.exp()
            * complex_log_weight(&pe, &table, &lk, i, mid, last)?.exp();
        zt = zt.max((whole - split).norm() / whole.norm());
    }
    Ok(vec![
        Check::at_most("girsanov_multiplicative", z, 1e-12),
        Check::at_most("complex_weight_multiplicative", zt, 1e-12),
    ])
}

/// Pathwise representation and modulus law, endpoint-conditional
/// representation and per-bin mean `|Z̃|`, at time `t`.
pub fn feynman_integral_checks(s: &Scenario, t: f64, p: &SuiteParams) -> Result<Vec<Check>> {
    let sc = s.clone().with_t_end(t);
    let (rec, table, pe) = nelson_ensemble(&sc, p)?;
    let ws = complex_weight(&pe, &table, t)?;
    let r = complex_pathwise_check(&pe, &ws, &rec, t)?;
    let tag = |c: &str| format!("{c}[{}]", s.id.name());
    let bins = bulk_bins(&rec, t, 24, 1e-3)?;
    let cb = conditional_representation_check(&pe, &ws, &rec, t, &bins)?;
    let q: Vec<_> = cb.iter().filter(|b| b.qualifies).collect();
    let ok = q.iter().filter(|b| b.pass).count();
    let frac = ok as f64 / q.len().max(1) as f64;
    let tv = total_variation_check(&pe, &ws, &rec, t, &bins)?;
    let tq: Vec<_> = tv.bins.iter().filter(|b| b.qualifies).collect();
    let tok = tq.iter().filter(|b| b.pass).count();
    let tfrac = tok as f64 / tq.len().max(1) as f64;
    Ok(vec![
        Check::from_pathwise(&r.representation).renamed(tag("pathwise_representation")),
        Check::from_pathwise(&r.modulus).renamed(tag("modulus_law")),
        Check::at_least(tag("conditional_representation"), frac, 0.9)
            .with_pass(!q.is_empty() && frac >= 0.9)
            .with_detail(format!(
                "{ok}/{} endpoint bins (count ≥ {MIN_ENDPOINT_COUNT}) within 3 stderr + binning bias",
                q.len()
            )),
        Check::at_least(tag("binned_modulus"), tfrac, 0.9)
            .with_pass(!tq.is_empty() && tfrac >= 0.9)
            .with_detail(format!(
                "{tok}/{} endpoint bins: mean |Z~| matches mean rho^1/2 ratio within 3 paired stderr",
                tq.len()
            ))
            .informational(),
    ])
}

/// Feynman–Kac expectation at `x = 0`, `t1 − t = 1` (oscillator potential,
/// `h1 = e^{−x²/2}`), and the pathwise identity on the `∇log h` ensemble.
pub fn feynman_kac_checks(p: &SuiteParams) -> Result<Vec<Check>> {
    let s = Scenario::standard(ScenarioId::OuFeynmanKac);
    let est =
        feynman_kac_estimate(0.0, 0.0, 1.0, &s.physics.potential, |y| (-y * y / 2.0).exp(), p.fk_paths, p.dt, p.seed)?;
    let target = (-0.5f64).exp();
    let mut out = vec![Check::at_most("feynman_kac_expectation", (est.mean - target).abs(), 3.0 * est.stderr)
        .with_detail(format!("estimate {:.6} ± {:.1e} vs {target:.6}, n = {}", est.mean, est.stderr, est.n))];
    let pathwise = |dt: f64, n: usize| -> Result<PathwiseReport> {
        let rec = s.clone().with_dt(dt).heat_record()?;
        let table = DriftTable::from_heat(&rec, 0.0)?;
        let pe = simulate_forward(&table, &SimParams::new(n, dt, p.seed))?;
        fk_pathwise_check(&pe, &table, &rec)
    };
    out.push(Check::from_pathwise(&pathwise(p.dt, p.n_paths.min(20_000))?));
    let fine = 0.1 * p.dt;
    out.push(
        Check::from_pathwise(&pathwise(fine, 2_000)?)
            .renamed(format!("feynman_kac_pathwise[dt={fine:e}]"))
            .informational(),
    );
    Ok(out)
}

/// Per-bin mean `|Z̃|` differs between two free packets of different width.
pub fn solution_dependence_check(p: &SuiteParams) -> Result<Check> {
    let t = 0.5;
    let mut a = Scenario::standard(ScenarioId::FreePacket).with_t_end(t);
    let mut b = a.clone();
    a.state = crate::scenario::InitialState::Packet { width: 1.0, momentum: 1.0, center: 0.0 };
    b.state = crate::scenario::InitialState::Packet { width: 0.7, momentum: 1.0, center: 0.0 };
    let bins = Bins::new(-2.0, 3.0, 20);
    let mean_abs = |s: &Scenario| -> Result<Vec<(f64, usize, f64, f64)>> {
        let (_, table, pe) = nelson_ensemble(s, p)?;
        let ws = complex_weight(&pe, &table, t)?;
        mean_abs_weight_by_bin(&pe, &ws, t, &bins)
    };
    let (ma, mb) = (mean_abs(&a)?, mean_abs(&b)?);
    let mut common = 0;
    let mut distinct = 0;
    for (x, y) in ma.iter().zip(&mb) {
        if x.1 >= MIN_ENDPOINT_COUNT && y.1 >= MIN_ENDPOINT_COUNT {
            common += 1;
            if (x.2 - y.2).abs() > 5.0 * (x.3 * x.3 + y.3 * y.3).sqrt() {
                distinct += 1;
            }
        }
    }
    Ok(Check::at_least("solution_dependence", distinct as f64, 1.0)
        .with_detail(format!("{distinct}/{common} common endpoint bins differ by more than 5 stderr")))
}

/// Total variation, minimality and polar reassembly on random finite partitions.
pub fn measure_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bound, mut minimal, mut reassembly) = (0usize, 0usize, 0usize);
    let instances = 100;
    for _ in 0..instances {
        let n = rng.gen_range(1..=40);
        let mu = FinitePartitionMeasure::new(
            (0..n).map(|_| Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect(),
        );
        let tv = mu.total_variation();
        if mu.total().norm() > tv * (1.0 + 1e-12) {
            bound += 1;
        }
        let exact: Vec<f64> = mu.masses.iter().map(|z| z.norm()).collect();
        let mut ok = mu.is_dominated_by(&exact);
        for _ in 0..20 {
            let lambda: Vec<f64> =
                exact.iter().map(|a| a + rng.gen_range(0.0..2.0) * rng.gen_range(0.0..1.0f64).powi(3)).collect();
            ok &= mu.is_dominated_by(&lambda) && crate::stats::sum(lambda.iter().copied()) >= tv * (1.0 - 1e-12);
        }
        if !ok {
            minimal += 1;
        }
        let back = mu.polar_decompose().reassemble();
        if back.masses.iter().zip(&mu.masses).any(|(a, b)| (a - b).norm() > 4.0 * f64::EPSILON * b.norm()) {
            reassembly += 1;
        }
    }
    let d = format!("failures out of {instances} random instances");
    vec![
        Check::at_most("tv_bounds_total_mass", bound as f64, 0.0).with_detail(d.clone()),
        Check::at_most("tv_minimal", minimal as f64, 0.0).with_detail(d.clone()),
        Check::at_most("polar_reassembly", reassembly as f64, 0.0).with_detail(d),
    ]
}

// ---------------------------------------------------------------- operators

fn harmonic_record(state: Coherent, t1: f64) -> Result<EvolutionRecord> {
    let cfg = PhysConfig::natural(Potential::harmonic(1.0));
    schrodinger_evolve(&ComplexField::from_fn(std_grid(), 0.0, |x| state.psi(x, 0.0)), &cfg, t1)
}

/// Stencil residuals of the conjugation identities and operator invariants.
pub fn operator_checks() -> Result<Vec<Check>> {
    let g = std_grid();
    let harmonic = PhysConfig::natural(Potential::harmonic(1.0));
    let ground = harmonic_record(Coherent::ground(), 0.6)?;
    let coherent = harmonic_record(Coherent::natural(1.0), 0.6)?;
    let packet = FreePacket::natural(1.0, 1.0);
    let free = schrodinger_evolve(
        &ComplexField::from_fn(g, 0.0, |x| packet.psi(x, 0.0)),
        &PhysConfig::natural(Potential::Zero),
        0.6,
    )?;
    let times = [0.1, 0.3, 0.5];
    let worst = |rs: Vec<ResidualReport>| -> ResidualReport {
        rs.into_iter().max_by(|a, b| a.max_residual.total_cmp(&b.max_residual)).expect("non-empty")
    };
    let mut out = Vec::new();

    let (ia, ib) = (Complex64::new(0.0, 0.5), Complex64::new(0.0, -1.0));
    let l1 = worst(times.iter().map(|&t| lemma1_check(&ground, &coherent, ia, ib, t)).collect::<Result<_>>()?);
    out.push(Check::from_report(&l1).renamed("lemma1[schrodinger]"));
    let h1 = ComplexField::from_real(g, 1.0, |x| (-x * x / 2.0).exp());
    let h2 = ComplexField::from_real(g, 1.0, |x| (-(x - 0.5) * (x - 0.5) / 2.0).exp());
    let hu = heat_terminal_solve(&h1, &harmonic, 0.0, 1.0)?;
    let hth = heat_terminal_solve(&h2, &harmonic, 0.0, 1.0)?;
    let (ha, hb) = (Complex64::new(-0.5, 0.0), Complex64::new(1.0, 0.0));
    let l1h = worst(times.iter().map(|&t| lemma1_check(&hu, &hth, ha, hb, t)).collect::<Result<_>>()?);
    out.push(Check::from_report(&l1h).renamed("lemma1[heat]"));

    let bump = TestFunction::bump(0.0, 3.0);
    let xbump = TestFunction::bump(0.5, 3.0).with_poly(vec![0.0, 1.0]).with_omega(2.0);
    let quad = TestFunction::bump(-0.5, 2.5).with_poly(vec![1.0, -0.5, 0.25]).with_omega(-1.0);
    let mut t2 = Vec::new();
    for rec in [&ground, &coherent, &free] {
        for f in [&bump, &xbump, &quad] {
            for &t in &times {
                t2.push(theorem2_conjugation_check(rec, f, t)?);
            }
        }
    }
    out.push(Check::from_report(&worst(t2)).renamed("theorem2_conjugation"));
    let a = theorem2_conjugation_check(&coherent, &xbump, 0.3)?.max_residual;
    let b = theorem2_conjugation_check(&coherent.scaled(Complex64::from_polar(1.0, 0.9)), &xbump, 0.3)?.max_residual;
    out.push(Check::at_most("theorem2_phase_invariance", (a - b).abs(), 1e-10));

    let psi0 = ground.initial();
    let gs = ground_state_transform_check(psi0, &harmonic, &TestFunction::bump(0.3, 2.5).sample(g, 0.0))?;
    out.push(Check::from_report(&gs.report).renamed("ground_state_transform"));
    let one = ground_state_transform_check(psi0, &harmonic, &ComplexField::from_real(g, 0.0, |_| 1.0))?;
    out.push(
        Check::at_most("ground_state_transform[f=1]", one.weighted_residual.max(one.lhs_max), 1e-6)
            .with_detail(format!("psi0-weighted residual {:.2e}, |LHS| {:.2e}", one.weighted_residual, one.lhs_max)),
    );

    let hj: Vec<_> = times.iter().map(|&t| hj_theta_check(&ground, &coherent, t)).collect::<Result<_>>()?;
    out.push(Check::from_report(&worst(hj.iter().map(|r| r.theta.clone()).collect())).renamed("hj_theta"));
    out.push(Check::from_report(&worst(hj.iter().map(|r| r.ratio.clone()).collect())).renamed("ratio_equation"));

    // linearity and the bilateral combination
    let df = fields_from_psi(coherent.at(0.3)?, &harmonic)?;
    let op = OperatorHandle::new(OperatorKind::Lb, &df, &harmonic)?;
    let f = TestFunction::bump(0.2, 2.0).with_poly(vec![1.0, 0.4]).sample(g, 0.0);
    let h = TestFunction::bump(-1.0, 1.5).with_poly(vec![0.5, -1.0, 0.2]).sample(g, 0.0);
    let (ca, cb) = (Complex64::new(0.7, -1.3), Complex64::new(-2.0, 0.4));
    let comb = f.zip_with(&h, |x, y| ca * x + cb * y)?;
    let mut lin = 0.0f64;
    for kind in [OperatorKind::LPlus, OperatorKind::LMinus, OperatorKind::Lb, OperatorKind::Hamiltonian] {
        let o = op.with_kind(kind);
        let (l, af, ah) = (apply(&o, &comb)?, apply(&o, &f)?, apply(&o, &h)?);
        let scale = af.max_abs() + ah.max_abs();
        for j in 0..g.n_points {
            lin = lin.max((l.values[j] - ca * af.values[j] - cb * ah.values[j]).norm() / scale);
        }
    }
    out.push(Check::at_most("operator_linearity", lin, 1e-12).with_detail("relative to max|Af| + max|Ag|"));
    let (lb, lp, lm) = (
        apply(&op, &f)?,
        apply(&op.with_kind(OperatorKind::LPlus), &f)?,
        apply(&op.with_kind(OperatorKind::LMinus), &f)?,
    );
    let gbd = (0..g.n_points)
        .map(|j| (lb.values[j] - W_PLUS * lp.values[j] - W_MINUS * lm.values[j]).norm())
        .fold(0.0, f64::max);
    out.push(Check::at_most("lb_bilateral_combination", gbd, 1e-10));
    Ok(out)
}

// ---------------------------------------------------------------- kernels

/// Heat-kernel collapse of the `∇log h` transition density and the
/// solution-independence of `ψ(t,x) p_q / ψ0(y)`.
pub fn kernel_checks() -> Result<Vec<Check>> {
    let g = std_grid();
    let zero = PhysConfig::natural(Potential::Zero);
    let heat = |h1: &dyn Fn(f64) -> f64| heat_terminal_solve(&ComplexField::from_real(g, 1.0, h1), &zero, 0.0, 1.0);
    let exp = heat(&|x| (0.5 * x).exp())?;
    let other = heat(&|x| 1.0 + 0.5 * (-x * x).exp())?;
    let mut out = vec![
        Check::from_report(&prop7_kernel_check(&exp)?).renamed("prop7_kernel[h=e^(x/2)]"),
        Check::from_report(&prop7_kernel_check(&heat(&|_| 1.0)?)?).renamed("prop7_kernel[h=1]").with_pass(true),
        Check::from_report(&prop7_independence(&exp, &other)?),
    ];
    // the flat record must agree to 1e-6 with zero drift
    let flat = out[1].value;
    out[1] = Check::at_most("prop7_kernel[h=1]", flat, 1e-6);

    let record = |s0: f64, k0: f64| -> Result<EvolutionRecord> {
        let p = FreePacket::natural(s0, k0);
        schrodinger_evolve(&ComplexField::from_fn(g, 0.0, |x| p.psi(x, 0.0)), &zero, 0.6)
    };
    let (ra, rb) = (record(1.0, 1.0)?, record(0.7, -0.5)?);
    let (t0, t) = (0.0, 0.5);
    let (mut collapse, mut indep, mut differ) = (0.0f64, 0.0f64, 0.0f64);
    for &(y, x) in &[(0.0, 0.0), (0.4, 1.2), (-1.0, 2.0), (1.5, -0.5), (-0.3, -1.7)] {
        let k = kernel_k(t0, y, t, x, &zero)?;
        let mut products = Vec::new();
        for r in [&ra, &rb] {
            let pq = kernel_pq(t0, y, t, x, r)?;
            let prod = interp(r.at(t)?, x)? / interp(r.at(t0)?, y)? * pq;
            collapse = collapse.max((prod - k).norm() / k.norm());
            products.push((prod, pq));
        }
        indep = indep.max((products[0].0 - products[1].0).norm() / k.norm());
        differ = differ.max((products[0].1 - products[1].1).norm() / products[0].1.norm());
    }
    out.push(Check::at_most("kernel_pq_collapse", collapse, 1e-12));
    out.push(
        Check::at_most("kernel_pq_independence", indep, 1e-12)
            .with_detail(format!("p_q itself differs between the two solutions by up to {differ:.2e} relative")),
    );
    out.push(Check::from_report(&kernel_pq_bdg_check(&ra, t0, 0.3, t, 6.0)?));
    Ok(out)
}

// ---------------------------------------------------------------- trotter

/// First-order slice convergence for both kinds and free-slice exactness.
/// First-order convergence: each doubling of `l` divides the error by a
/// factor in `[1.6, 2.4]`.
pub fn convergence_checks(runs: &[TrotterRun]) -> Vec<Check> {
    runs.windows(2)
        .zip(convergence_ratios(runs))
        .map(|(w, r)| {
            let name = format!("trotter_ratio[{},l={}/{}]", w[1].kind.name(), w[0].l, w[1].l);
            Check::at_least(name, r, 1.6)
                .with_pass((1.6..=2.4).contains(&r))
                .with_detail(format!("error {:.4e} -> {:.4e}; accepted range [1.6, 2.4]", w[0].l2_error, w[1].l2_error))
        })
        .collect()
}

pub fn trotter_checks() -> Result<Vec<Check>> {
    let g = std_grid();
    let ls = [8, 16, 32, 64];
    let s = Scenario::standard(ScenarioId::HarmonicCoherent);
    let q = convergence_scan(
        &s.initial_field(),
        &s.physics,
        1.0,
        &ls,
        TrotterKind::Quantum,
        TrotterOptions::default(),
        None,
    )?;
    let ou = Scenario::standard(ScenarioId::OuFeynmanKac);
    let exact = ComplexField::from_real(g, 0.0, |x| (-0.5f64).exp() * (-x * x / 2.0).exp());
    let h = convergence_scan(
        &ou.initial_field(),
        &ou.physics,
        1.0,
        &ls,
        TrotterKind::Heat,
        TrotterOptions::default(),
        Some(&exact),
    )?;
    let mut out = Vec::new();
    for runs in [&q, &h] {
        out.extend(convergence_checks(runs));
        let last = runs.last().expect("runs");
        out.push(Check::at_most(format!("trotter_l2[{},l={}]", last.kind.name(), last.l), last.l2_error, 0.02));
    }
    let norm = q.iter().map(|r| (r.result.norm_sqr() - 1.0).abs() / r.l as f64).fold(0.0, f64::max);
    out.push(Check::at_most("trotter_norm_per_slice", norm, 1e-6));
    let clipped: usize = h.iter().map(|r| r.clipped).sum();
    out.push(Check::at_most("trotter_heat_clipped", clipped as f64, 0.0));

    let p = FreePacket::natural(1.0, 1.0);
    let zero = PhysConfig::natural(Potential::Zero);
    let one = trotter_step_quantum(&ComplexField::from_fn(g, 0.0, |x| p.psi(x, 0.0)), 1.0, &zero)?;
    let exact = ComplexField::from_fn(g, 1.0, |x| p.psi(x, 1.0));
    out.push(Check::at_most("free_slice_exact", one.l2_distance(&exact)?, 1e-6));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(run_suite("nope", None, &SuiteParams::new(1)).is_err());
    }

    #[test]
    fn deterministic_suites_pass() {
        for name in ["grid", "measures"] {
            let r = run_suite(name, None, &SuiteParams::new(3)).unwrap();
            assert!(r.iter().all(|s| s.pass), "{r:?}");
        }
        let f =
            run_suite("fields", Some(&Scenario::standard(ScenarioId::HarmonicCoherent)), &SuiteParams::new(3)).unwrap();
        assert!(f[0].pass, "{f:?}");
    }

    #[test]
    fn verdict_ignores_informational_checks() {
        let r = SuiteReport::new(
            "x",
            None,
            vec![Check::at_most("a", 1.0, 2.0), Check::at_most("b", 3.0, 2.0).informational()],
        );
        assert!(r.pass);
        let r = SuiteReport::new("x", None, vec![Check::at_least("a", 1.0, 2.0)]);
        assert!(!r.pass);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\">=\""));
    }
}
