//! Gapped periodic tight-binding models and their Fermi projections.
//!
//! A model is a finite list of hopping matrices `T_R` indexed by lattice
//! vectors; `T_R` couples cell `x` to cell `x + R`, so the fiber in the
//! periodic gauge is
//!
//! ```text
//! H(k) = sum_R e^{i k.R} T_R,        dH/dk_j (k) = sum_R i R_j e^{i k.R} T_R.
//! ```
//!
//! All orbitals sit at the cell origin.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::BufRead;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{hermitian_eigen, Axis, CMatrix, FiberOperator, ProjectionField, HERMITICITY_TOL, MAX_FIBER_DIM};
use crate::lattice::{BravaisLattice, KGrid};

/// Eigenvalues closer than this to the Fermi energy count as gap closure.
pub const GAP_CLOSED_TOL: f64 = 1e-8;

/// Default cutoff on `|R_i|` for hoppings.
pub const DEFAULT_RANGE_CUTOFF: i32 = 8;

#[derive(Clone, Debug)]
pub struct HoppingModel {
    name: String,
    lattice: BravaisLattice,
    dim: usize,
    hoppings: BTreeMap<[i32; 2], CMatrix>,
    mu: f64,
}

impl HoppingModel {
    /// Validates `T_{-R} = T_R^dagger` for every listed `R` and the range cutoff.
    pub fn new(
        name: impl Into<String>,
        lattice: BravaisLattice,
        dim: usize,
        hoppings: BTreeMap<[i32; 2], CMatrix>,
        mu: f64,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_FIBER_DIM {
            return Err(Error::Validation(format!("orbital count {dim} out of range")));
        }
        for (r, t) in &hoppings {
            if t.shape() != (dim, dim) {
                return Err(Error::ShapeMismatch(format!("hopping {r:?} has shape {:?}", t.shape())));
            }
            if r[0].abs() > DEFAULT_RANGE_CUTOFF || r[1].abs() > DEFAULT_RANGE_CUTOFF {
                return Err(Error::Validation(format!(
                    "hopping {r:?} beyond range cutoff {DEFAULT_RANGE_CUTOFF}"
                )));
            }
            let partner = hoppings.get(&[-r[0], -r[1]]);
            let deviation = match partner {
                Some(p) => (p - t.adjoint()).norm(),
                None => t.norm(),
            };
            if deviation > HERMITICITY_TOL {
                return Err(Error::NotHermitian { deviation });
            }
        }
        if !mu.is_finite() {
            return Err(Error::Validation("Fermi energy must be finite".into()));
        }
        Ok(Self {
            name: name.into(),
            lattice,
            dim,
            hoppings,
            mu,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lattice(&self) -> &BravaisLattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn hoppings(&self) -> &BTreeMap<[i32; 2], CMatrix> {
        &self.hoppings
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Largest `|R_i|` among the hoppings.
    pub fn range(&self) -> i32 {
        self.hoppings
            .keys()
            .map(|r| r[0].abs().max(r[1].abs()))
            .max()
            .unwrap_or(0)
    }

    /// Moves the Fermi energy to the middle of the gap above the lowest
    /// `filled` bands, as sampled on `grid`.
    pub fn place_mu_in_gap(self, grid: &Arc<KGrid>, filled: usize) -> Result<Self> {
        if filled == 0 || filled >= self.dim {
            return Err(Error::Validation(format!(
                "filled band count {filled} must lie in 1..{}",
                self.dim
            )));
        }
        let h = build_hamiltonian(&self, grid)?;
        let (below, above) = h
            .nodes()
            .par_iter()
            .map(|m| {
                let (vals, _) = hermitian_eigen(m);
                (vals[filled - 1], vals[filled])
            })
            .reduce(
                || (f64::NEG_INFINITY, f64::INFINITY),
                |a, b| (a.0.max(b.0), a.1.min(b.1)),
            );
        if above - below <= 2.0 * GAP_CLOSED_TOL {
            return Err(Error::GapClosed {
                mu: 0.5 * (above + below),
                eigenvalue: below,
                distance: 0.5 * (above - below),
            });
        }
        Ok(self.with_mu(0.5 * (above + below)))
    }
}

/// Accumulates bonds; each bond is stated once and its Hermitian partner is
/// added automatically.
#[derive(Clone, Debug)]
pub struct HoppingBuilder {
    dim: usize,
    hoppings: BTreeMap<[i32; 2], CMatrix>,
}

impl HoppingBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            hoppings: BTreeMap::new(),
        }
    }

    fn entry(&mut self, r: [i32; 2]) -> &mut CMatrix {
        let dim = self.dim;
        self.hoppings.entry(r).or_insert_with(|| CMatrix::zeros(dim, dim))
    }

    /// Adds `amp` to `T_R[row, col]` and `conj(amp)` to `T_{-R}[col, row]`.
    pub fn bond(mut self, r: [i32; 2], row: usize, col: usize, amp: Complex64) -> Self {
        if r == [0, 0] && row == col {
            self.entry(r)[(row, row)] += Complex64::new(amp.re, 0.0);
        } else {
            self.entry(r)[(row, col)] += amp;
            self.entry([-r[0], -r[1]])[(col, row)] += amp.conj();
        }
        self
    }

    /// Adds the Hermitian on-site matrix `m` to `T_0`.
    pub fn onsite(mut self, m: &CMatrix) -> Self {
        *self.entry([0, 0]) += m;
        self
    }

    /// Adds `t` to `T_R` and `t^dagger` to `T_{-R}` (for `R != 0`).
    pub fn hop(mut self, r: [i32; 2], t: &CMatrix) -> Self {
        assert_ne!(r, [0, 0], "use onsite for R = 0");
        *self.entry(r) += t;
        *self.entry([-r[0], -r[1]]) += t.adjoint();
        self
    }

    pub fn build(self, name: &str, lattice: BravaisLattice, mu: f64) -> Result<HoppingModel> {
        HoppingModel::new(name, lattice, self.dim, self.hoppings, mu)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Qi-Wu-Zhang model on the square lattice,
/// `H(k) = sin kx sx + sin ky sy + (u + cos kx + cos ky) sz`, Fermi energy 0.
pub fn qwz(u: f64) -> HoppingModel {
    let (sx, sy, sz) = (pauli_x(), pauli_y(), pauli_z());
    let half = c(0.5, 0.0);
    let t1 = (&sz - &sx * c(0.0, 1.0)) * half;
    let t2 = (&sz - &sy * c(0.0, 1.0)) * half;
    HoppingBuilder::new(2)
        .onsite(&(sz * c(u, 0.0)))
        .hop([1, 0], &t1)
        .hop([0, 1], &t2)
        .build("qwz", BravaisLattice::square(), 0.0)
        .expect("qwz hoppings are Hermitian")
}

/// Haldane model on the honeycomb lattice with unit nearest-neighbour
/// distance. Sublattice A carries `+mass`, B carries `-mass`; second-neighbour
/// hoppings carry phase `+phi` counter-clockwise on A and `-phi` on B.
pub fn haldane(t1: f64, t2: f64, phi: f64, mass: f64) -> HoppingModel {
    let s3 = 3f64.sqrt();
    let lattice = BravaisLattice::new([1.5, 0.5 * s3], [1.5, -0.5 * s3]).expect("honeycomb");
    // A at the origin, B at (1, 0): the three A->B bonds land in cells 0, -a1, -a2.
    let mut b = HoppingBuilder::new(2)
        .onsite(&CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(mass, 0.0),
            c(-mass, 0.0),
        ])))
        .bond([0, 0], 0, 1, c(t1, 0.0))
        .bond([-1, 0], 0, 1, c(t1, 0.0))
        .bond([0, -1], 0, 1, c(t1, 0.0));
    // Counter-clockwise second-neighbour vectors: a1 - a2, -a1, a2.
    for r in [[1, -1], [-1, 0], [0, 1]] {
        b = b
            .bond(r, 0, 0, Complex64::from_polar(t2, phi))
            .bond(r, 1, 1, Complex64::from_polar(t2, -phi));
    }
    b.build("haldane", lattice, 0.0)
        .expect("haldane hoppings are Hermitian")
}

/// Harper-Hofstadter model at flux `p/q` per plaquette in the Landau gauge,
/// magnetic cell of `q` sites along x. The Fermi energy is left at 0; use
/// [`HoppingModel::place_mu_in_gap`] to select a gap of the butterfly.
pub fn hofstadter(p: i64, q: usize, t: f64) -> Result<HoppingModel> {
    if q == 0 || q > MAX_FIBER_DIM {
        return Err(Error::Validation(format!("magnetic cell size q = {q} out of range")));
    }
    let lattice = BravaisLattice::new([q as f64, 0.0], [0.0, 1.0])?;
    let mut b = HoppingBuilder::new(q);
    for j in 0..q {
        // x bond from site j to j+1, wrapping into the next magnetic cell
        if j + 1 < q {
            b = b.bond([0, 0], j, j + 1, c(t, 0.0));
        } else {
            b = b.bond([1, 0], j, 0, c(t, 0.0));
        }
        // y bond with Peierls phase 2 pi p j / q
        let phase = 2.0 * PI * (p as f64) * (j as f64) / q as f64;
        b = b.bond([0, 1], j, j, Complex64::from_polar(t, phase));
    }
    b.build("hofstadter", lattice, 0.0)
}

/// Atomic-limit model: a k-independent Hermitian on-site matrix.
pub fn flat(m: &CMatrix, mu: f64) -> Result<HoppingModel> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch("flat model needs a square matrix".into()));
    }
    let mut hoppings = BTreeMap::new();
    hoppings.insert([0, 0], m.clone());
    HoppingModel::new("flat", BravaisLattice::square(), m.nrows(), hoppings, mu)
}

/// One-orbital square lattice with nearest-neighbour hopping `t`.
pub fn square_nn(t: f64) -> HoppingModel {
    let tt = CMatrix::from_element(1, 1, c(t, 0.0));
    HoppingBuilder::new(1)
        .hop([1, 0], &tt)
        .hop([0, 1], &tt)
        .build("square_nn", BravaisLattice::square(), 0.0)
        .expect("square hoppings are Hermitian")
}

/// Reads a hopping list: whitespace-separated `R1 R2 row col re im` per line,
/// `#` comments allowed. Entries missing their Hermitian partner are completed;
/// entries whose partner is present must match it.
pub fn load_hopping_list<R: BufRead>(name: &str, input: R, lattice: BravaisLattice, mu: f64) -> Result<HoppingModel> {
    let mut entries: BTreeMap<([i32; 2], usize, usize), Complex64> = BTreeMap::new();
    let mut dim = 0;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 6 {
            return Err(perr(format!("expected 6 fields, got {}", f.len())));
        }
        let int = |s: &str| s.parse::<i32>().map_err(|e| perr(format!("{s}: {e}")));
        let idx = |s: &str| s.parse::<usize>().map_err(|e| perr(format!("{s}: {e}")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| perr(format!("{s}: {e}")));
        let r = [int(f[0])?, int(f[1])?];
        let (row, col) = (idx(f[2])?, idx(f[3])?);
        let v = c(num(f[4])?, num(f[5])?);
        dim = dim.max(row + 1).max(col + 1);
        *entries.entry((r, row, col)).or_insert(c(0.0, 0.0)) += v;
    }
    if dim == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "empty hopping list".into(),
        });
    }
    let listed: Vec<_> = entries.iter().map(|(k, v)| (*k, *v)).collect();
    for ((r, row, col), v) in listed {
        let key = ([-r[0], -r[1]], col, row);
        match entries.get(&key) {
            Some(w) => {
                let deviation = (w - v.conj()).norm();
                if deviation > HERMITICITY_TOL {
                    return Err(Error::NotHermitian { deviation });
                }
            }
            None => {
                entries.insert(key, v.conj());
            }
        }
    }
    let mut hoppings: BTreeMap<[i32; 2], CMatrix> = BTreeMap::new();
    for ((r, row, col), v) in entries {
        hoppings.entry(r).or_insert_with(|| CMatrix::zeros(dim, dim))[(row, col)] = v;
    }
    HoppingModel::new(name, lattice, dim, hoppings, mu)
}

fn check_resolved(model: &HoppingModel, grid: &KGrid) -> Result<()> {
    if model.lattice() != grid.lattice() {
        return Err(Error::ShapeMismatch("model and grid use different lattices".into()));
    }
    for r in model.hoppings().keys() {
        if !grid.resolves(*r) {
            return Err(Error::GridTooCoarse {
                n1: grid.n1(),
                n2: grid.n2(),
                r1: r[0],
                r2: r[1],
            });
        }
    }
    Ok(())
}

fn fourier_sum<F>(model: &HoppingModel, grid: &Arc<KGrid>, weight: F) -> Result<FiberOperator>
where
    F: Fn([i32; 2]) -> Complex64 + Sync + Send,
{
    check_resolved(model, grid)?;
    let dim = model.dim();
    let g = grid.clone();
    Ok(FiberOperator::from_fn(grid.clone(), dim, move |node| {
        let mut h = CMatrix::zeros(dim, dim);
        for (r, t) in model.hoppings() {
            let w = weight(*r);
            if w != c(0.0, 0.0) {
                h += t * (Complex64::from_polar(1.0, g.phase(node, *r)) * w);
            }
        }
        h
    }))
}

pub fn build_hamiltonian(model: &HoppingModel, grid: &Arc<KGrid>) -> Result<FiberOperator> {
    fourier_sum(model, grid, |_| c(1.0, 0.0))
}

/// Velocity field `dH/dk_axis`, the fiber of `J = i[H, X_axis]`.
pub fn analytic_velocity(model: &HoppingModel, grid: &Arc<KGrid>, axis: Axis) -> Result<FiberOperator> {
    let lattice = *model.lattice();
    fourier_sum(model, grid, move |r| c(0.0, lattice.vector(r)[axis.index()]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Top of the occupied spectrum over the grid.
    pub gap_lower: f64,
    /// Bottom of the unoccupied spectrum over the grid.
    pub gap_upper: f64,
    pub gap_width: f64,
    pub rank: usize,
    /// Bottom of the occupied spectrum; used to size default contours.
    pub occupied_min: f64,
}

/// Spectral projection onto eigenvalues below `mu`, nodewise.
pub fn fermi_projection(h: &FiberOperator, mu: f64) -> Result<(ProjectionField, GapReport)> {
    let deviation = h.hermiticity_defect();
    if deviation >= HERMITICITY_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let dim = h.dim();
    let per_node: Vec<(CMatrix, usize, f64, f64, f64, Option<(f64, f64)>)> = h
        .nodes()
        .par_iter()
        .map(|m| {
            let (vals, vecs) = hermitian_eigen(m);
            let closest = vals
                .iter()
                .map(|&e| (e, (e - mu).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .filter(|(_, d)| *d < GAP_CLOSED_TOL);
            let occ = vals.iter().filter(|&&e| e < mu).count();
            let mut p = CMatrix::zeros(dim, dim);
            for j in 0..occ {
                let v = vecs.column(j);
                p += &v * v.adjoint();
            }
            let top = if occ > 0 { vals[occ - 1] } else { f64::NEG_INFINITY };
            let bottom = if occ < dim { vals[occ] } else { f64::INFINITY };
            (p, occ, top, bottom, vals[0], closest)
        })
        .collect();

    if let Some((eigenvalue, distance)) = per_node.iter().filter_map(|n| n.5).min_by(|a, b| a.1.total_cmp(&b.1)) {
        return Err(Error::GapClosed {
            mu,
            eigenvalue,
            distance,
        });
    }
    let min = per_node.iter().map(|n| n.1).min().unwrap_or(0);
    let max = per_node.iter().map(|n| n.1).max().unwrap_or(0);
    if min != max {
        return Err(Error::RankInconsistent { min, max });
    }
    let report = GapReport {
        gap_lower: per_node.iter().map(|n| n.2).fold(f64::NEG_INFINITY, f64::max),
        gap_upper: per_node.iter().map(|n| n.3).fold(f64::INFINITY, f64::min),
        gap_width: 0.0,
        rank: min,
        occupied_min: per_node.iter().map(|n| n.4).fold(f64::INFINITY, f64::min),
    };
    let report = GapReport {
        gap_width: report.gap_upper - report.gap_lower,
        ..report
    };
    let data = per_node.into_iter().map(|n| n.0).collect();
    let op = FiberOperator::from_nodes(h.grid().clone(), dim, data)?;
    Ok((ProjectionField::new(op)?, report))
}
