//! Named experiment setups: grid, physics, initial (or terminal) state and horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{heat_terminal_solve, schrodinger_evolve, EvolutionRecord, PhysConfig, Potential};
use crate::grid::{Boundary, ComplexField, GridSpec};
use crate::states::{Coherent, FreePacket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    FreePacket,
    HarmonicGround,
    HarmonicCoherent,
    OuFeynmanKac,
    Custom,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::FreePacket,
        ScenarioId::HarmonicGround,
        ScenarioId::HarmonicCoherent,
        ScenarioId::OuFeynmanKac,
        ScenarioId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::FreePacket => "free_packet",
            ScenarioId::HarmonicGround => "harmonic_ground",
            ScenarioId::HarmonicCoherent => "harmonic_coherent",
            ScenarioId::OuFeynmanKac => "ou_feynman_kac",
            ScenarioId::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario {s:?}")))
    }
}

/// Initial wave function, or terminal data for heat scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Gaussian packet `exp(−(x−x0)²/(4 s0²) + i k0 x)`.
    Packet { width: f64, momentum: f64, center: f64 },
    /// Displaced ground state of the oscillator with angular frequency `omega`.
    Coherent { center: f64, omega: f64 },
    /// Terminal data `exp(−x²/(2 w²))` for the backward heat equation.
    HeatTerminal { width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub grid: GridSpec,
    pub physics: PhysConfig,
    pub state: InitialState,
    /// Evolution span from `t = 0`.
    pub t_end: f64,
}

impl Scenario {
    /// Defaults for a named scenario; `Custom` starts as a free packet.
    pub fn standard(id: ScenarioId) -> Self {
        let grid = GridSpec::standard(Boundary::DirichletZero);
        let harmonic = PhysConfig::natural(Potential::harmonic(1.0));
        let (physics, state) = match id {
            ScenarioId::FreePacket | ScenarioId::Custom => {
                (PhysConfig::natural(Potential::Zero), InitialState::Packet { width: 1.0, momentum: 1.0, center: 0.0 })
            }
            ScenarioId::HarmonicGround => (harmonic, InitialState::Coherent { center: 0.0, omega: 1.0 }),
            ScenarioId::HarmonicCoherent => (harmonic, InitialState::Coherent { center: 1.0, omega: 1.0 }),
            ScenarioId::OuFeynmanKac => (harmonic, InitialState::HeatTerminal { width: 1.0 }),
        };
        Self { id, grid, physics, state, t_end: 1.0 }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.physics.dt = dt;
        self
    }

    pub fn with_t_end(mut self, t: f64) -> Self {
        self.t_end = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!("t_end must be positive, got {}", self.t_end)));
        }
        PhysConfig::new(self.physics.hbar, self.physics.mass, self.physics.potential.clone(), self.physics.dt)?;
        GridSpec::new(self.grid.half_width, self.grid.n_points, self.grid.boundary)?;
        match self.state {
            InitialState::Packet { width, .. } | InitialState::HeatTerminal { width } if !(width > 0.0) => {
                Err(Error::InvalidParameter(format!("state width must be positive, got {width}")))
            }
            InitialState::Coherent { omega, .. } if !(omega > 0.0) => {
                Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_heat(&self) -> bool {
        matches!(self.state, InitialState::HeatTerminal { .. })
    }

    /// `|ψ|` time-independent: the undisplaced oscillator ground state in its own potential.
    pub fn is_stationary(&self) -> bool {
        match (&self.state, &self.physics.potential) {
            (InitialState::Coherent { center, omega }, Potential::Harmonic { stiffness, center: c0 }) => {
                *center == *c0 && (self.physics.mass * omega * omega - stiffness).abs() <= 1e-12 * stiffness
            }
            _ => false,
        }
    }

    /// Closed-form solution when the potential matches the state, else `None`.
    pub fn exact(&self, x: f64, t: f64) -> Option<num_complex::Complex64> {
        let (h, m) = (self.physics.hbar, self.physics.mass);
        match (&self.state, &self.physics.potential) {
            (InitialState::Packet { width, momentum, center }, Potential::Zero) => {
                Some(FreePacket { s0: *width, k0: *momentum, x0: *center, hbar: h, mass: m }.psi(x, t))
            }
            (InitialState::Coherent { .. }, Potential::Harmonic { center: 0.0, .. }) if self.harmonic_matches() => {
                Some(self.coherent()?.psi(x, t))
            }
            _ => None,
        }
    }

    fn harmonic_matches(&self) -> bool {
        match (&self.state, &self.physics.potential) {
            (InitialState::Coherent { omega, .. }, Potential::Harmonic { stiffness, .. }) => {
                (self.physics.mass * omega * omega - stiffness).abs() <= 1e-12 * stiffness
            }
            _ => false,
        }
    }

    fn coherent(&self) -> Option<Coherent> {
        match self.state {
            InitialState::Coherent { center, omega } => {
                Some(Coherent { x0: center, omega, hbar: self.physics.hbar, mass: self.physics.mass })
            }
            _ => None,
        }
    }

    /// `ψ0` (Schrödinger scenarios) or `h1` at `t_end` (heat scenarios).
    pub fn initial_field(&self) -> ComplexField {
        let (h, m) = (self.physics.hbar, self.physics.mass);
        match self.state {
            InitialState::Packet { width, momentum, center } => {
                let p = FreePacket { s0: width, k0: momentum, x0: center, hbar: h, mass: m };
                ComplexField::from_fn(self.grid, 0.0, |x| p.psi(x, 0.0))
            }
            InitialState::Coherent { .. } => {
                let c = self.coherent().expect("coherent state");
                ComplexField::from_fn(self.grid, 0.0, |x| c.psi(x, 0.0))
            }
            InitialState::HeatTerminal { width } => {
                ComplexField::from_real(self.grid, self.t_end, |x| (-x * x / (2.0 * width * width)).exp())
            }
        }
    }

    pub fn schrodinger_record(&self) -> Result<EvolutionRecord> {
        if self.is_heat() {
            return Err(Error::Precondition(format!("{} is a heat scenario", self.id.name())));
        }
        schrodinger_evolve(&self.initial_field(), &self.physics, self.t_end)
    }

    pub fn heat_record(&self) -> Result<EvolutionRecord> {
        if !self.is_heat() {
            return Err(Error::Precondition(format!("{} is not a heat scenario", self.id.name())));
        }
        heat_terminal_solve(&self.initial_field(), &self.physics, 0.0, self.t_end)
    }

    /// Either record kind, as appropriate.
    pub fn record(&self) -> Result<EvolutionRecord> {
        if self.is_heat() {
            self.heat_record()
        } else {
            self.schrodinger_record()
        }
    }
}
