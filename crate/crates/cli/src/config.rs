//! TOML run configuration and its resolution against command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochmech::scenario::{InitialState, Scenario, ScenarioId};
use stochmech::suites::SuiteParams;
use stochmech::{Boundary, Potential};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: Option<ScenarioId>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub t_end: Option<f64>,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub physics: PhysicsOverrides,
    pub state: Option<InitialState>,
    #[serde(default)]
    pub sde: SdeOverrides,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub half_width: Option<f64>,
    pub n_points: Option<usize>,
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsOverrides {
    pub hbar: Option<f64>,
    pub mass: Option<f64>,
    pub dt: Option<f64>,
    pub potential: Option<Potential>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeOverrides {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub fk_paths: Option<usize>,
    pub n_bins: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    fn has_scenario_overrides(&self) -> bool {
        let g = &self.grid;
        let p = &self.physics;
        self.t_end.is_some()
            || self.state.is_some()
            || g.half_width.is_some()
            || g.n_points.is_some()
            || g.boundary.is_some()
            || p.hbar.is_some()
            || p.mass.is_some()
            || p.dt.is_some()
            || p.potential.is_some()
    }
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioId>,
}

/// Everything a subcommand needs, after merging file and flags.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    /// `None` when neither the file nor the flags named a scenario.
    pub scenario: Option<Scenario>,
    pub params: SuiteParams,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Resolved {
    pub fn from_flags(flags: &Flags) -> CliResult<Self> {
        let cfg = match &flags.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig { schema_version: SCHEMA_VERSION, ..Default::default() },
        };
        Self::merge(cfg, flags)
    }

    pub fn merge(cfg: RunConfig, flags: &Flags) -> CliResult<Self> {
        let seed = flags
            .seed
            .or(cfg.seed)
            .ok_or_else(|| CliError::Config("a seed is required (--seed or `seed` in the config)".into()))?;
        let id = flags.scenario.or(cfg.scenario);
        if id.is_none() && cfg.has_scenario_overrides() {
            return Err(CliError::Config("grid, physics, state or t_end overrides need a scenario".into()));
        }
        let scenario = id.map(|id| apply_overrides(Scenario::standard(id), &cfg)).transpose()?;

        let mut params = SuiteParams::new(seed);
        let sde = &cfg.sde;
        params.n_paths = sde.n_paths.unwrap_or(params.n_paths);
        params.dt = sde.dt.unwrap_or(params.dt);
        params.fk_paths = sde.fk_paths.unwrap_or(params.fk_paths);
        params.n_bins = sde.n_bins.unwrap_or(params.n_bins);
        if params.n_paths == 0 || params.fk_paths == 0 || params.n_bins == 0 {
            return Err(CliError::Config("sde counts must be positive".into()));
        }
        if !(params.dt.is_finite() && params.dt > 0.0) {
            return Err(CliError::Config(format!("sde.dt must be positive, got {}", params.dt)));
        }
        let out = flags.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { scenario, params, out })
    }

    /// The configured scenario, or `default` when none was named.
    pub fn scenario_or(&self, default: ScenarioId) -> Scenario {
        self.scenario.clone().unwrap_or_else(|| Scenario::standard(default))
    }
}

fn apply_overrides(mut s: Scenario, cfg: &RunConfig) -> CliResult<Scenario> {
    let g = &cfg.grid;
    s.grid.half_width = g.half_width.unwrap_or(s.grid.half_width);
    s.grid.n_points = g.n_points.unwrap_or(s.grid.n_points);
    s.grid.boundary = g.boundary.unwrap_or(s.grid.boundary);
    let p = &cfg.physics;
    s.physics.hbar = p.hbar.unwrap_or(s.physics.hbar);
    s.physics.mass = p.mass.unwrap_or(s.physics.mass);
    s.physics.dt = p.dt.unwrap_or(s.physics.dt);
    if let Some(v) = &p.potential {
        s.physics.potential = v.clone();
    }
    if let Some(st) = &cfg.state {
        s.state = st.clone();
    }
    s.t_end = cfg.t_end.unwrap_or(s.t_end);
    s.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(seed: Option<u64>) -> Flags {
        Flags { seed, ..Default::default() }
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::parse("schema_version = 1\nseed = 3\n").unwrap();
        let r = Resolved::merge(cfg, &flags(None)).unwrap();
        assert_eq!(r.params.seed, 3);
        assert!(r.scenario.is_none());
        assert_eq!(r.out, PathBuf::from("out"));
    }

    #[test]
    fn flags_override_file() {
        let cfg = RunConfig::parse("schema_version = 1\nseed = 3\nscenario = \"free_packet\"\n").unwrap();
        let f = Flags { seed: Some(9), scenario: Some(ScenarioId::HarmonicGround), ..Default::default() };
        let r = Resolved::merge(cfg, &f).unwrap();
        assert_eq!(r.params.seed, 9);
        assert_eq!(r.scenario.unwrap().id, ScenarioId::HarmonicGround);
    }

    #[test]
    fn tables_override_scenario_defaults() {
        let text = r#"
schema_version = 1
seed = 1
scenario = "custom"
t_end = 0.5

[grid]
n_points = 512

[physics]
potential = { kind = "harmonic", stiffness = 2.0, center = 0.0 }

[state]
kind = "packet"
width = 0.5
momentum = 0.0
center = 1.0

[sde]
n_paths = 1000
"#;
        let r = Resolved::merge(RunConfig::parse(text).unwrap(), &flags(None)).unwrap();
        let s = r.scenario.unwrap();
        assert_eq!(s.grid.n_points, 512);
        assert_eq!(s.t_end, 0.5);
        assert_eq!(s.physics.potential, Potential::Harmonic { stiffness: 2.0, center: 0.0 });
        assert_eq!(s.state, InitialState::Packet { width: 0.5, momentum: 0.0, center: 1.0 });
        assert_eq!(r.params.n_paths, 1000);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("seed = 1\n").is_err());
        assert!(RunConfig::parse("schema_version = 2\n").is_err());
        assert!(RunConfig::parse("schema_version = 1\nunknown = 1\n").is_err());
        let no_seed = RunConfig::parse("schema_version = 1\n").unwrap();
        assert!(matches!(Resolved::merge(no_seed, &flags(None)), Err(CliError::Config(_))));
        let orphan = RunConfig::parse("schema_version = 1\nt_end = 2.0\n").unwrap();
        assert!(Resolved::merge(orphan, &flags(Some(1))).is_err());
        let bad = RunConfig::parse("schema_version = 1\nscenario = \"free_packet\"\nt_end = -1.0\n").unwrap();
        assert!(Resolved::merge(bad, &flags(Some(1))).is_err());
        assert!(RunConfig::parse("schema_version = 1\nscenario = \"nope\"\n").is_err());
    }
}
