//! Uniform one-dimensional lattice with finite-difference stencils,
//! trapezoid quadrature and linear interpolation.
//!
//! Nodes are `x_j = -L + j * dx` with `dx = 2L / (N - 1)`. Every numerical
//! module in the crate samples its fields on a [`GridSpec`].

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment of positions and values at the edges of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Fields vanish outside `[-L, L]`; used by the PDE solvers.
    DirichletZero,
    /// Positions beyond the box read the nearest edge value; used for SDE drifts.
    ClampDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_points: usize,
    pub boundary: Boundary,
}

impl GridSpec {
    pub const MIN_POINTS: usize = 16;

    pub fn new(half_width: f64, n_points: usize, boundary: Boundary) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        if n_points < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!("need at least {} points, got {n_points}", Self::MIN_POINTS)));
        }
        Ok(Self { half_width, n_points, boundary })
    }

    /// The default desk-scale lattice: `L = 12`, `N = 1024`.
    pub fn standard(boundary: Boundary) -> Self {
        Self { half_width: 12.0, n_points: 1024, boundary }
    }

    pub fn with_boundary(self, boundary: Boundary) -> Self {
        Self { boundary, ..self }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        let m = (self.n_points - 1) as f64;
        self.half_width * (2.0 * j as f64 - m) / m
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Same lattice, ignoring the boundary policy.
    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.n_points == other.n_points && self.half_width == other.half_width
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(L={}, N={}) vs (L={}, N={})",
                self.half_width, self.n_points, other.half_width, other.n_points
            )))
        }
    }

    /// Fractional node coordinate of `x`.
    fn coordinate(&self, x: f64) -> f64 {
        (x + self.half_width) / self.dx()
    }

    /// Index of the node nearest to `x`, clamped into the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let u = self.coordinate(x).round();
        if u <= 0.0 {
            0
        } else {
            (u as usize).min(self.n_points - 1)
        }
    }
}

/// Finite-difference accuracy of a stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// 3-point stencils, second-order one-sided closures at the edges.
    Second,
    /// 5-point stencils, fourth-order one-sided closures at the edges.
    Fourth,
}

/// Values that stencils can act on (real or complex samples).
pub trait Sample: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl Sample for f64 {}
impl Sample for Complex64 {}

pub fn gradient_slice<T: Sample>(f: &[T], dx: f64, order: Order) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::default(); n];
    match order {
        Order::Second => {
            let h = 1.0 / (2.0 * dx);
            for i in 1..n - 1 {
                out[i] = (f[i + 1] - f[i - 1]) * h;
            }
            out[0] = (f[1] * 4.0 - f[0] * 3.0 - f[2]) * h;
            out[n - 1] = (f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) * h;
        }
        Order::Fourth => {
            let h = 1.0 / (12.0 * dx);
            for i in 2..n - 2 {
                out[i] = (f[i - 2] - f[i - 1] * 8.0 + f[i + 1] * 8.0 - f[i + 2]) * h;
            }
            out[0] = (f[1] * 48.0 - f[0] * 25.0 - f[2] * 36.0 + f[3] * 16.0 - f[4] * 3.0) * h;
            out[1] = (f[2] * 18.0 - f[0] * 3.0 - f[1] * 10.0 - f[3] * 6.0 + f[4]) * h;
            out[n - 1] = (f[n - 1] * 25.0 - f[n - 2] * 48.0 + f[n - 3] * 36.0 - f[n - 4] * 16.0 + f[n - 5] * 3.0) * h;
            out[n - 2] = (f[n - 1] * 3.0 + f[n - 2] * 10.0 - f[n - 3] * 18.0 + f[n - 4] * 6.0 - f[n - 5]) * h;
        }
    }
    out
}

pub fn laplacian_slice<T: Sample>(f: &[T], dx: f64, order: Order) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::default(); n];
    match order {
        Order::Second => {
            let h = 1.0 / (dx * dx);
            for i in 1..n - 1 {
                out[i] = ((f[i + 1] - f[i]) - (f[i] - f[i - 1])) * h;
            }
            out[0] = (f[0] * 2.0 - f[1] * 5.0 + f[2] * 4.0 - f[3]) * h;
            out[n - 1] = (f[n - 1] * 2.0 - f[n - 2] * 5.0 + f[n - 3] * 4.0 - f[n - 4]) * h;
        }
        Order::Fourth => {
            let h = 1.0 / (12.0 * dx * dx);
            for i in 2..n - 2 {
                out[i] = (f[i - 1] * 16.0 + f[i + 1] * 16.0 - f[i - 2] - f[i + 2] - f[i] * 30.0) * h;
            }
            let edge =
                |g: [T; 6]| (g[0] * 45.0 - g[1] * 154.0 + g[2] * 214.0 - g[3] * 156.0 + g[4] * 61.0 - g[5] * 10.0) * h;
            let near = |g: [T; 6]| (g[0] * 10.0 - g[1] * 15.0 - g[2] * 4.0 + g[3] * 14.0 - g[4] * 6.0 + g[5]) * h;
            out[0] = edge([f[0], f[1], f[2], f[3], f[4], f[5]]);
            out[1] = near([f[0], f[1], f[2], f[3], f[4], f[5]]);
            out[n - 1] = edge([f[n - 1], f[n - 2], f[n - 3], f[n - 4], f[n - 5], f[n - 6]]);
            out[n - 2] = near([f[n - 1], f[n - 2], f[n - 3], f[n - 4], f[n - 5], f[n - 6]]);
        }
    }
    out
}

pub fn trapezoid<T: Sample>(f: &[T], dx: f64) -> T {
    let n = f.len();
    if n == 0 {
        return T::default();
    }
    let mut acc = T::default();
    for v in &f[1..n - 1] {
        acc = acc + *v;
    }
    (acc + (f[0] + f[n - 1]) * 0.5) * dx
}

/// Linear interpolation of nodal samples. Exact at nodes.
pub fn interp_slice<T: Sample>(grid: &GridSpec, f: &[T], x: f64) -> Result<T> {
    if x.is_nan() {
        return Err(Error::NonFinite("interpolation position is NaN".into()));
    }
    let n = grid.n_points;
    let l = grid.half_width;
    if x < -l || x > l {
        return Ok(match grid.boundary {
            Boundary::ClampDrift => {
                if x < -l {
                    f[0]
                } else {
                    f[n - 1]
                }
            }
            Boundary::DirichletZero => T::default(),
        });
    }
    let u = grid.coordinate(x);
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        return Ok(f[(r as usize).min(n - 1)]);
    }
    let j = (u.floor() as usize).min(n - 2);
    let w = u - j as f64;
    Ok(f[j] * (1.0 - w) + f[j + 1] * w)
}

/// Complex samples on a grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
    pub time: f64,
}

impl ComplexField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::GridMismatch(format!("{} values for a {}-point grid", values.len(), grid.n_points)));
        }
        Ok(Self { grid, values, time })
    }

    pub fn from_fn(grid: GridSpec, time: f64, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.n_points).map(|j| f(grid.x(j))).collect();
        Self { grid, values, time }
    }

    pub fn from_real(grid: GridSpec, time: f64, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, time, |x| Complex64::new(f(x), 0.0))
    }

    pub fn zeros(grid: GridSpec, time: f64) -> Self {
        Self { grid, values: vec![Complex64::default(); grid.n_points], time }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), time: self.time }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            time: self.time,
        })
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Squared L² norm by trapezoid quadrature.
    pub fn norm_sqr(&self) -> f64 {
        trapezoid(&self.density(), self.grid.dx())
    }

    /// L² distance by trapezoid quadrature.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.zip_with(other, |a, b| a - b)?;
        Ok(diff.norm_sqr().sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

pub fn gradient(f: &ComplexField) -> Result<ComplexField> {
    check_len(f, 3)?;
    Ok(ComplexField { values: gradient_slice(&f.values, f.grid.dx(), Order::Second), ..f.clone() })
}

pub fn laplacian(f: &ComplexField) -> Result<ComplexField> {
    check_len(f, 4)?;
    Ok(ComplexField { values: laplacian_slice(&f.values, f.grid.dx(), Order::Second), ..f.clone() })
}

/// Fourth-order gradient, used where second-order truncation error is too coarse.
pub fn gradient4(f: &ComplexField) -> Result<ComplexField> {
    check_len(f, 5)?;
    Ok(ComplexField { values: gradient_slice(&f.values, f.grid.dx(), Order::Fourth), ..f.clone() })
}

pub fn laplacian4(f: &ComplexField) -> Result<ComplexField> {
    check_len(f, 6)?;
    Ok(ComplexField { values: laplacian_slice(&f.values, f.grid.dx(), Order::Fourth), ..f.clone() })
}

pub fn quad(f: &ComplexField) -> Complex64 {
    trapezoid(&f.values, f.grid.dx())
}

pub fn interp(f: &ComplexField, x: f64) -> Result<Complex64> {
    interp_slice(&f.grid, &f.values, x)
}

fn check_len(f: &ComplexField, min: usize) -> Result<()> {
    if f.values.len() != f.grid.n_points {
        return Err(Error::GridMismatch(format!("{} values for a {}-point grid", f.values.len(), f.grid.n_points)));
    }
    if f.values.len() < min {
        return Err(Error::InvalidGrid(format!("stencil needs {min} points")));
    }
    Ok(())
}
