//! Numerical laboratory for Nelson's stochastic mechanics in one dimension:
//! Schrödinger and heat solvers, Nelson diffusion sampling, complex path
//! weights, Feynman–Kac estimates and Trotter time slicing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolve;
pub mod fields;
pub mod grid;
pub mod io;
pub mod operators;
pub mod pathfunc;
pub mod report;
pub mod scenario;
pub mod sde;
pub mod states;
pub mod stats;
pub mod suites;
pub mod trotter;

mod stepper;

pub use error::{Error, Result};
pub use evolve::{EvolutionRecord, PhysConfig, Potential, RecordKind};
pub use fields::DriftFields;
pub use grid::{Boundary, ComplexField, GridSpec};
pub use num_complex::Complex64;
pub use report::ResidualReport;
pub use sde::{DriftTable, PathEnsemble};
