//! Acceptance run: one verdict line per criterion, followed by the checks
//! behind it. Exits 0 unless `ACCEPTANCE_STRICT=1` and a criterion fails.

use std::time::Instant;

use stochmech::scenario::{Scenario, ScenarioId};
use stochmech::suites::{
    born_check, drift_checks, feynman_integral_checks, feynman_kac_checks, fqn_checks, kernel_checks, measure_checks,
    operator_checks, qv_checks, solution_dependence_check, trotter_checks, Check, Cmp, SuiteParams,
};
use stochmech::Result;

const SEED: u64 = 20_240_607;

struct Criterion {
    id: usize,
    title: &'static str,
    checks: Vec<Check>,
    seconds: f64,
}

impl Criterion {
    fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass || !c.required)
    }

    fn print(&self) {
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        println!("[{verdict}] {:>2}. {} ({:.1}s)", self.id, self.title, self.seconds);
        for c in &self.checks {
            let mark = match (c.pass, c.required) {
                (true, _) => "ok  ",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            let cmp = match c.comparison {
                Cmp::AtMost => "<=",
                Cmp::AtLeast => ">=",
            };
            println!("        {mark} {:<44} {:>12.5e} {cmp} {:.3e}  {}", c.name, c.value, c.tolerance, c.detail);
        }
    }
}

fn run(id: usize, title: &'static str, f: impl FnOnce() -> Result<Vec<Check>>) -> Criterion {
    let start = Instant::now();
    let checks = match f() {
        Ok(c) => c,
        Err(e) => vec![Check::at_most(format!("error: {e}"), f64::NAN, 0.0)],
    };
    let c = Criterion { id, title, checks, seconds: start.elapsed().as_secs_f64() };
    c.print();
    c
}

fn main() {
    let p = SuiteParams::new(SEED);
    let free = Scenario::standard(ScenarioId::FreePacket);
    let ground = Scenario::standard(ScenarioId::HarmonicGround);
    let coherent = Scenario::standard(ScenarioId::HarmonicCoherent);
    println!(
        "acceptance: N = 1024, L = 12, dt = {:e}, n_paths = {}, Feynman-Kac paths = {}, seed = {SEED}",
        p.dt, p.n_paths, p.fk_paths
    );

    let mut results = Vec::new();
    let mut trotter = None;
    results.push(run(1, "Trotter convergence, quantum and heat", || {
        let all = trotter_checks()?;
        let (one, rest): (Vec<_>, Vec<_>) = all.into_iter().partition(|c| c.name == "free_slice_exact");
        trotter = Some(one);
        Ok(rest)
    }));
    results.push(run(2, "Free-case kernel exactness", || {
        trotter.take().ok_or_else(|| stochmech::Error::Precondition("trotter checks did not run".into()))
    }));
    results.push(run(3, "Born rule, free packet and coherent state", || {
        Ok(vec![born_check(&free, &p)?, born_check(&coherent, &p)?])
    }));
    results.push(run(4, "Nelson relation and conditional drifts, ground state", || drift_checks(&ground, &p)));
    results.push(run(5, "Quantum-noise quadratic variation", || qv_checks(&ground, &p)));
    let mut conditional = None;
    results.push(run(6, "Pathwise representation and modulus law, free packet t = 0.5", || {
        let all = feynman_integral_checks(&free, 0.5, &p)?;
        let (rest, cond): (Vec<_>, Vec<_>) =
            all.into_iter().partition(|c| !c.name.starts_with("conditional_representation"));
        conditional = Some(cond);
        Ok(rest)
    }));
    results.push(run(7, "Conditional representation by endpoint bins", || {
        conditional.take().ok_or_else(|| stochmech::Error::Precondition("pathwise checks did not run".into()))
    }));
    results.push(run(8, "Feynman-Kac expectation and pathwise identity", || feynman_kac_checks(&p)));
    results.push(run(9, "Operator identities", operator_checks));
    results.push(run(10, "Kernel collapses and independence", kernel_checks));
    results.push(run(11, "Negative results: forward quantum noise, solution dependence", || {
        let mut c = fqn_checks(&ground, &p)?;
        c.push(solution_dependence_check(&p)?);
        Ok(c)
    }));
    results.push(run(12, "Finite-partition total variation and polar decomposition", || Ok(measure_checks(SEED))));

    let passed = results.iter().filter(|c| c.pass()).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    for c in results.iter().filter(|c| !c.pass()) {
        println!("acceptance: criterion {} ({}) is red", c.id, c.title);
    }
    if passed < results.len() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
