//! Subcommand bodies. Each writes its artifacts plus `summary.json` into the
//! output directory and reports whether every required check passed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use stochmech::evolve::check_log_heat;
use stochmech::fields::{drift_from_h, fields_from_psi};
use stochmech::grid::interp;
use stochmech::io::fmt_f64;
use stochmech::pathfunc::feynman_kac_estimate;
use stochmech::scenario::{InitialState, Scenario, ScenarioId};
use stochmech::sde::{born_tv, bulk_range, simulate_forward, write_summary_csv, SimParams};
use stochmech::stats::Bins;
use stochmech::suites::{
    convergence_checks, evolve_checks, fields_checks, run_suite, Check, Cmp, SuiteParams, SuiteReport, SUITES,
};
use stochmech::trotter::{convergence_scan, write_convergence_csv, TrotterKind, TrotterOptions};
use stochmech::DriftTable;

use crate::config::{Resolved, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema_version: u32,
    command: &'a str,
    target: Option<&'a str>,
    seed: u64,
    scenario: Option<&'a Scenario>,
    params: &'a SuiteParams,
    pass: bool,
    suites: &'a [SuiteReport],
    artifacts: &'a [String],
}

/// Output directory plus the names of files written so far.
struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        Ok(Self { dir, names: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> stochmech::Result<()>) -> CliResult<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(|source| CliError::Io { path, source })?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        target: Option<&str>,
        r: &Resolved,
        scenario: Option<&Scenario>,
        suites: &[SuiteReport],
    ) -> CliResult<bool> {
        let pass = suites.iter().all(|s| s.pass);
        self.names.push("summary.json".into());
        let summary = Summary {
            schema_version: SCHEMA_VERSION,
            command,
            target,
            seed: r.params.seed,
            scenario,
            params: &r.params,
            pass,
            suites,
            artifacts: &self.names,
        };
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        let path = self.dir.join("summary.json");
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        print_reports(suites);
        println!("{}: {} -> {}", command, if pass { "PASS" } else { "FAIL" }, self.dir.display());
        Ok(pass)
    }
}

fn print_reports(suites: &[SuiteReport]) {
    for s in suites {
        let scenario = s.scenario.as_deref().map(|n| format!(" [{n}]")).unwrap_or_default();
        println!("{} {}{}", if s.pass { "PASS" } else { "FAIL" }, s.suite, scenario);
        for c in &s.checks {
            let mark = match (c.pass, c.required) {
                (true, _) => "ok  ",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            let cmp = match c.comparison {
                Cmp::AtMost => "<=",
                Cmp::AtLeast => ">=",
            };
            println!("    {mark} {} = {:.6e} {cmp} {:.3e}", c.name, c.value, c.tolerance);
        }
    }
}

pub fn evolve(r: &Resolved, every: usize) -> CliResult<bool> {
    let s = r.scenario_or(ScenarioId::FreePacket);
    let rec = s.record()?;
    let mut art = Artifacts::new(&r.out)?;
    art.write("evolution.csv", |w| rec.write_csv_every(w, every))?;
    let report = SuiteReport::new("evolve", Some(&s), evolve_checks(&s)?);
    art.finish("evolve", None, r, Some(&s), &[report])
}

pub fn fields(r: &Resolved, t: Option<f64>) -> CliResult<bool> {
    let s = r.scenario_or(ScenarioId::FreePacket);
    let t = t.unwrap_or(if s.is_heat() { 0.5 * s.t_end } else { s.t_end });
    let rec = s.record()?;
    let (df, checks) = if s.is_heat() {
        (drift_from_h(rec.at(t)?)?, vec![Check::from_report(&check_log_heat(&rec, t)?)])
    } else {
        (fields_from_psi(rec.at(t)?, &s.physics)?, fields_checks(&s)?)
    };
    let mut art = Artifacts::new(&r.out)?;
    art.write("fields.csv", |w| df.write_csv(w))?;
    art.finish("fields", None, r, Some(&s), &[SuiteReport::new("fields", Some(&s), checks)])
}

pub fn sample(r: &Resolved, write_paths: bool) -> CliResult<bool> {
    let s = r.scenario_or(ScenarioId::FreePacket);
    if s.is_heat() {
        return Err(CliError::Usage(format!("sample needs a Schrödinger scenario, got {}", s.id.name())));
    }
    let p = &r.params;
    let rec = s.schrodinger_record()?;
    let table = DriftTable::from_schrodinger(&rec)?;
    let pe = simulate_forward(&table, &SimParams::new(p.n_paths, p.dt, p.seed))?;
    let rho = rec.last().density();
    let (lo, hi) = bulk_range(&rec.grid, &rho, 1e-3);
    let bins = Bins::new(lo, hi, p.n_bins);
    // interior times only: both forward and backward increments are summarized
    let times: Vec<f64> = (0..=10).map(|j| pe.time(1 + j * (pe.n_times - 3) / 10)).collect();

    let mut art = Artifacts::new(&r.out)?;
    art.write("sample_summary.csv", |w| write_summary_csv(&pe, &times, &bins, w))?;
    if write_paths {
        art.write("paths.bin", |w| pe.write_binary(w))?;
    }
    let tv = born_tv(&rec.grid, &rho, &pe.column(pe.n_times - 1), p.n_bins);
    let check = Check::at_most(format!("born_tv[{}]", s.id.name()), tv, 0.05).with_detail(format!(
        "n = {}, {} bins, t = {}",
        p.n_paths,
        p.n_bins,
        pe.end()
    ));
    art.finish("sample", None, r, Some(&s), &[SuiteReport::new("sample", Some(&s), vec![check])])
}

pub fn feynman_kac(r: &Resolved, x: f64) -> CliResult<bool> {
    let s = r.scenario_or(ScenarioId::OuFeynmanKac);
    let InitialState::HeatTerminal { width } = s.state else {
        return Err(CliError::Usage(format!("feynman-kac needs a heat scenario, got {}", s.id.name())));
    };
    let p = &r.params;
    let h1 = move |y: f64| (-y * y / (2.0 * width * width)).exp();
    let est = feynman_kac_estimate(x, 0.0, s.t_end, &s.physics.potential, h1, p.fk_paths, p.dt, p.seed)?;
    let reference = interp(s.heat_record()?.initial(), x)?.re;
    let check = Check::at_most("feynman_kac_expectation", (est.mean - reference).abs(), 3.0 * est.stderr)
        .with_detail(format!("estimate {} ± {:.2e} vs heat solve {}", est.mean, est.stderr, reference));

    let mut art = Artifacts::new(&r.out)?;
    art.write("feynman_kac.csv", |w| {
        writeln!(w, "x,t,t1,estimate,stderr,n_paths,reference")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(x),
            fmt_f64(0.0),
            fmt_f64(s.t_end),
            fmt_f64(est.mean),
            fmt_f64(est.stderr),
            est.n,
            fmt_f64(reference)
        )?;
        Ok(())
    })?;
    art.finish("feynman-kac", None, r, Some(&s), &[SuiteReport::new("feynman_kac", Some(&s), vec![check])])
}

pub fn trotter(r: &Resolved, kind: TrotterKind, ls: &[usize], opts: TrotterOptions) -> CliResult<bool> {
    let s = r.scenario_or(match kind {
        TrotterKind::Quantum => ScenarioId::HarmonicCoherent,
        TrotterKind::Heat => ScenarioId::OuFeynmanKac,
    });
    if s.is_heat() != (kind == TrotterKind::Heat) {
        return Err(CliError::Usage(format!("--kind {} does not match scenario {}", kind.name(), s.id.name())));
    }
    if ls.is_empty() {
        return Err(CliError::Usage("--l needs at least one slice count".into()));
    }
    let runs = convergence_scan(&s.initial_field(), &s.physics, s.t_end, ls, kind, opts, None)?;
    let mut checks = convergence_checks(&runs);
    for run in &runs {
        for w in &run.warnings {
            eprintln!("warning: l = {}: {w}", run.l);
        }
    }
    if kind == TrotterKind::Heat {
        let clipped: usize = runs.iter().map(|r| r.clipped).sum();
        checks.push(Check::at_most("trotter_heat_clipped", clipped as f64, 0.0).informational());
    }
    let mut art = Artifacts::new(&r.out)?;
    art.write("trotter_convergence.csv", |w| write_convergence_csv(&runs, w))?;
    art.finish("trotter", Some(kind.name()), r, Some(&s), &[SuiteReport::new("trotter", Some(&s), checks)])
}

pub fn verify(r: &Resolved, suite: &str) -> CliResult<bool> {
    if suite != "all" && !SUITES.contains(&suite) {
        return Err(CliError::Usage(format!("unknown suite {suite:?}; expected one of {} or all", SUITES.join(", "))));
    }
    let reports = run_suite(suite, r.scenario.as_ref(), &r.params)?;
    Artifacts::new(&r.out)?.finish("verify", Some(suite), r, r.scenario.as_ref(), &reports)
}
