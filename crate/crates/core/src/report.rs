use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;

/// Outcome of a residual check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub check: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub grid: GridSpec,
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ResidualReport {
    pub fn new(check: impl Into<String>, max_residual: f64, tolerance: f64, grid: GridSpec, dt: Option<f64>) -> Self {
        Self {
            check: check.into(),
            max_residual,
            tolerance,
            pass: max_residual.is_finite() && max_residual <= tolerance,
            grid,
            dt,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn pass_flag_and_json() {
        let g = GridSpec::standard(Boundary::DirichletZero);
        let r = ResidualReport::new("x", 1e-4, 1e-3, g, Some(1e-3));
        assert!(r.pass);
        assert!(!ResidualReport::new("x", f64::NAN, 1e-3, g, None).pass);
        let back: ResidualReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
