//! Closed-form wave functions used as initial data and reference solutions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Free Gaussian packet with position spread `s0` (std of |ψ|²) and
/// mean wavenumber `k0`, centred at `x0` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreePacket {
    pub s0: f64,
    pub k0: f64,
    pub x0: f64,
    pub hbar: f64,
    pub mass: f64,
}

impl FreePacket {
    pub fn natural(s0: f64, k0: f64) -> Self {
        Self { s0, k0, x0: 0.0, hbar: 1.0, mass: 1.0 }
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let i = Complex64::i();
        let v = self.hbar * self.k0 / self.mass;
        let alpha = Complex64::new(1.0, self.hbar * t / (2.0 * self.mass * self.s0 * self.s0));
        let xi = x - self.x0 - v * t;
        let norm = (2.0 * PI * self.s0 * self.s0).powf(-0.25);
        let expo = -xi * xi / (4.0 * self.s0 * self.s0 * alpha) + i * self.k0 * (x - self.x0 - 0.5 * v * t);
        norm / alpha.sqrt() * expo.exp()
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        self.psi(x, t).norm_sqr()
    }

    /// Position spread (std of |ψ|²) at time `t`.
    pub fn spread(&self, t: f64) -> f64 {
        let r = self.hbar * t / (2.0 * self.mass * self.s0 * self.s0);
        self.s0 * (1.0 + r * r).sqrt()
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.x0 + self.hbar * self.k0 / self.mass * t
    }
}

/// Coherent state of `V = m ω² x² / 2`, displaced to `x0` at `t = 0`.
/// `x0 = 0` is the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherent {
    pub x0: f64,
    pub omega: f64,
    pub hbar: f64,
    pub mass: f64,
}

impl Coherent {
    pub fn natural(x0: f64) -> Self {
        Self { x0, omega: 1.0, hbar: 1.0, mass: 1.0 }
    }

    pub fn ground() -> Self {
        Self::natural(0.0)
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let scale = (self.mass * self.omega / self.hbar).sqrt();
        let xi = x * scale;
        let q = self.x0 * scale * (self.omega * t).cos();
        let p = -self.x0 * scale * (self.omega * t).sin();
        let norm = (scale * scale / PI).powf(0.25);
        let expo = Complex64::new(-(xi - q) * (xi - q) / 2.0, p * xi - 0.5 * p * q - 0.5 * self.omega * t);
        norm * expo.exp()
    }

    pub fn center(&self, t: f64) -> f64 {
        self.x0 * (self.omega * t).cos()
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.hbar * self.omega
    }
}
