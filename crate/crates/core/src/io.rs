//! Plain-text number formatting and binary path dumps.

use std::io::Write;

use crate::error::Result;

/// Full-precision scientific notation (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `header {n_paths: u64, n_times: u64, dt: f64}` then row-major
/// positions, all little-endian.
pub fn write_paths_le<W: Write>(mut w: W, n_paths: usize, n_times: usize, dt: f64, rows: &[f64]) -> Result<()> {
    w.write_all(&(n_paths as u64).to_le_bytes())?;
    w.write_all(&(n_times as u64).to_le_bytes())?;
    w.write_all(&dt.to_le_bytes())?;
    for v in rows {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
