//! Two-dimensional Bravais lattices and uniform Brillouin-zone grids.
//!
//! k-points are laid out as `k = (m1/n1) b1 + (m2/n2) b2` with `0 <= m_i < n_i`,
//! node index `m1 * n2 + m2`. The grid includes `k = 0` and tiles one cell of
//! the reciprocal lattice exactly once, so the arithmetic mean over nodes is the
//! trapezoidal rule on the torus.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

const DEGENERATE_DET: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BravaisLattice {
    a1: Vec2,
    a2: Vec2,
    cell_area: f64,
}

impl BravaisLattice {
    pub fn new(a1: Vec2, a2: Vec2) -> Result<Self> {
        let det = a1[0] * a2[1] - a1[1] * a2[0];
        if !det.is_finite() || det.abs() <= DEGENERATE_DET {
            return Err(Error::DegenerateLattice { det });
        }
        Ok(Self {
            a1,
            a2,
            cell_area: det.abs(),
        })
    }

    pub fn square() -> Self {
        Self::new([1.0, 0.0], [0.0, 1.0]).expect("square lattice")
    }

    /// Triangular lattice with unit spacing, `a2` at 60 degrees from `a1`.
    pub fn triangular() -> Self {
        Self::new([1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]).expect("triangular lattice")
    }

    pub fn a1(&self) -> Vec2 {
        self.a1
    }

    pub fn a2(&self) -> Vec2 {
        self.a2
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    /// Signed determinant `det[a1 a2]`; its sign fixes the orientation of the grid.
    pub fn orientation(&self) -> f64 {
        (self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0]).signum()
    }

    /// Cartesian coordinates of the lattice vector `r1 a1 + r2 a2`.
    pub fn vector(&self, r: [i32; 2]) -> Vec2 {
        let (r1, r2) = (r[0] as f64, r[1] as f64);
        [r1 * self.a1[0] + r2 * self.a2[0], r1 * self.a1[1] + r2 * self.a2[1]]
    }

    pub fn reciprocal_basis(&self) -> (Vec2, Vec2) {
        let [ax, ay] = self.a1;
        let [bx, by] = self.a2;
        let det = ax * by - ay * bx;
        let s = 2.0 * PI / det;
        ([s * by, -s * bx], [-s * ay, s * ax])
    }
}

/// Reciprocal basis `b1, b2` with `a_i . b_j = 2 pi delta_ij`.
pub fn reciprocal_basis(lattice: &BravaisLattice) -> Result<(Vec2, Vec2)> {
    // Re-validate: a deserialized lattice bypasses `new`.
    let checked = BravaisLattice::new(lattice.a1, lattice.a2)?;
    Ok(checked.reciprocal_basis())
}

/// How derivatives in k are taken on a grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    /// Spectral differentiation on the torus (production path).
    #[default]
    Fourier,
    /// Second-order centered differences; debugging fallback only.
    CentralDifference,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KGrid {
    lattice: BravaisLattice,
    n1: usize,
    n2: usize,
    b1: Vec2,
    b2: Vec2,
    bz_volume: f64,
    scheme: DerivativeScheme,
}

impl KGrid {
    pub fn new(lattice: BravaisLattice, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Validation(format!("grid sizes must be positive, got {n1}x{n2}")));
        }
        let (b1, b2) = reciprocal_basis(&lattice)?;
        let bz_volume = (b1[0] * b2[1] - b1[1] * b2[0]).abs();
        Ok(Self {
            lattice,
            n1,
            n2,
            b1,
            b2,
            bz_volume,
            scheme: DerivativeScheme::Fourier,
        })
    }

    pub fn with_scheme(mut self, scheme: DerivativeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn lattice(&self) -> &BravaisLattice {
        &self.lattice
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn b1(&self) -> Vec2 {
        self.b1
    }

    pub fn b2(&self) -> Vec2 {
        self.b2
    }

    pub fn bz_volume(&self) -> f64 {
        self.bz_volume
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn index(&self, m1: usize, m2: usize) -> usize {
        (m1 % self.n1) * self.n2 + (m2 % self.n2)
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.n2, node % self.n2)
    }

    pub fn k(&self, node: usize) -> Vec2 {
        let (m1, m2) = self.coords(node);
        let s1 = m1 as f64 / self.n1 as f64;
        let s2 = m2 as f64 / self.n2 as f64;
        [s1 * self.b1[0] + s2 * self.b2[0], s1 * self.b1[1] + s2 * self.b2[1]]
    }

    /// `k . R` for the lattice vector `r1 a1 + r2 a2`, computed from the
    /// integer grid coordinates so that it is exact modulo 2 pi.
    pub fn phase(&self, node: usize, r: [i32; 2]) -> f64 {
        let (m1, m2) = self.coords(node);
        let f1 = (m1 as i64 * r[0] as i64).rem_euclid(self.n1 as i64) as f64 / self.n1 as f64;
        let f2 = (m2 as i64 * r[1] as i64).rem_euclid(self.n2 as i64) as f64 / self.n2 as f64;
        2.0 * PI * (f1 + f2)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.len()).map(|i| self.k(i))
    }

    /// Whether a Fourier mode with integer coordinates `r` is resolved below
    /// the Nyquist frequency in both directions.
    pub fn resolves(&self, r: [i32; 2]) -> bool {
        (2 * r[0].unsigned_abs() as usize) < self.n1 && (2 * r[1].unsigned_abs() as usize) < self.n2
    }
}

/// Mean of per-node values: the normalized Brillouin-zone integral under the
/// trapezoidal rule.
pub fn bz_mean(values: &[Complex64], grid: &KGrid) -> Result<Complex64> {
    if values.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    let sum: Complex64 = values.iter().sum();
    Ok(sum / grid.len() as f64)
}
