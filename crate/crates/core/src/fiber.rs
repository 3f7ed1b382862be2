//! Periodic operators as fields of `N x N` matrices on a Brillouin-zone grid.
//!
//! Everything lives in the periodic gauge, `A(k + G) = A(k)` for reciprocal
//! lattice vectors `G`, so commutators with the position operators become
//! derivatives on the torus:
//!
//! ```text
//! [A, X_j](k) = -i d/dk_j A(k)
//! ```
//!
//! and the trace per unit volume is the zone average of the fiber trace divided
//! by the cell area.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{bz_mean, DerivativeScheme, KGrid};

pub type CMatrix = DMatrix<Complex64>;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const PROJECTOR_TOL: f64 = 1e-10;
pub const UNITARITY_TOL: f64 = 1e-12;
pub const MAX_FIBER_DIM: usize = 64;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FiberOperator {
    grid: Arc<KGrid>,
    dim: usize,
    data: Vec<CMatrix>,
}

impl FiberOperator {
    pub fn from_nodes(grid: Arc<KGrid>, dim: usize, data: Vec<CMatrix>) -> Result<Self> {
        if dim == 0 || dim > MAX_FIBER_DIM {
            return Err(Error::ShapeMismatch(format!(
                "fiber dimension {dim} outside 1..={MAX_FIBER_DIM}"
            )));
        }
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} fibers for {} grid nodes",
                data.len(),
                grid.len()
            )));
        }
        if let Some(bad) = data.iter().find(|m| m.shape() != (dim, dim)) {
            return Err(Error::ShapeMismatch(format!(
                "fiber of shape {:?}, expected {dim}x{dim}",
                bad.shape()
            )));
        }
        Ok(Self { grid, dim, data })
    }

    /// Builds a field by evaluating `f(node)` at every node in parallel.
    pub fn from_fn<F>(grid: Arc<KGrid>, dim: usize, f: F) -> Self
    where
        F: Fn(usize) -> CMatrix + Sync + Send,
    {
        let data: Vec<CMatrix> = (0..grid.len()).into_par_iter().map(&f).collect();
        Self::from_nodes(grid, dim, data).expect("from_fn produced inconsistent fibers")
    }

    pub fn constant(grid: Arc<KGrid>, m: &CMatrix) -> Self {
        assert!(m.is_square(), "constant field needs a square matrix");
        let dim = m.nrows();
        let data = vec![m.clone(); grid.len()];
        Self { grid, dim, data }
    }

    pub fn zeros(grid: Arc<KGrid>, dim: usize) -> Self {
        Self::constant(grid, &CMatrix::zeros(dim, dim))
    }

    pub fn identity(grid: Arc<KGrid>, dim: usize) -> Self {
        Self::constant(grid, &CMatrix::identity(dim, dim))
    }

    pub fn grid(&self) -> &Arc<KGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn node(&self, i: usize) -> &CMatrix {
        &self.data[i]
    }

    pub fn nodes(&self) -> &[CMatrix] {
        &self.data
    }

    pub fn into_nodes(self) -> Vec<CMatrix> {
        self.data
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch(format!(
                "fiber dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&CMatrix) -> CMatrix + Sync + Send,
    {
        let data = self.data.par_iter().map(f).collect();
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            data,
        }
    }

    pub fn zip_with<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(&CMatrix, &CMatrix) -> CMatrix + Sync + Send,
    {
        self.check_compatible(other)?;
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| f(a, b))
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            dim: self.dim,
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|a| a * c)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b - b * a)
    }

    pub fn dagger(&self) -> Self {
        self.map(|a| a.adjoint())
    }

    /// Largest nodewise `||A(k) - A(k)^dagger||` (Frobenius).
    pub fn hermiticity_defect(&self) -> f64 {
        self.data.iter().map(|a| (a - a.adjoint()).norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() < tol
    }

    /// Nodewise traces.
    pub fn traces(&self) -> Vec<Complex64> {
        self.data.iter().map(|a| a.trace()).collect()
    }

    /// `max_k ||A(k) - B(k)||` in operator norm.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        Ok(sup_fiber_norm(&self.sub(other)?))
    }
}

/// Free-function form of the pointwise algebra.
pub fn add(a: &FiberOperator, b: &FiberOperator) -> Result<FiberOperator> {
    a.add(b)
}

pub fn scale(c: Complex64, a: &FiberOperator) -> FiberOperator {
    a.scale(c)
}

pub fn mul(a: &FiberOperator, b: &FiberOperator) -> Result<FiberOperator> {
    a.mul(b)
}

pub fn commutator(a: &FiberOperator, b: &FiberOperator) -> Result<FiberOperator> {
    a.commutator(b)
}

pub fn dagger(a: &FiberOperator) -> FiberOperator {
    a.dagger()
}

/// Fiber field of `[A, X_axis]`, i.e. `-i d/dk_axis A(k)`.
pub fn commutator_with_position(a: &FiberOperator, axis: Axis) -> FiberOperator {
    let grid = a.grid().clone();
    let lattice = grid.lattice();
    // Cartesian component of the lattice vectors a1, a2 along the axis.
    let c1 = lattice.a1()[axis.index()];
    let c2 = lattice.a2()[axis.index()];
    match grid.scheme() {
        DerivativeScheme::Fourier => fourier_position_commutator(a, c1, c2),
        DerivativeScheme::CentralDifference => difference_position_commutator(a, c1, c2),
    }
}

/// `d/dk_axis A(k)`, i.e. `i [A, X_axis]`.
pub fn k_derivative(a: &FiberOperator, axis: Axis) -> FiberOperator {
    commutator_with_position(a, axis).scale(I)
}

fn signed_mode(idx: usize, n: usize) -> Option<i64> {
    if 2 * idx < n {
        Some(idx as i64)
    } else if 2 * idx > n {
        Some(idx as i64 - n as i64)
    } else {
        // Nyquist mode of an even grid has no consistent derivative.
        None
    }
}

fn fourier_position_commutator(a: &FiberOperator, c1: f64, c2: f64) -> FiberOperator {
    let grid = a.grid().clone();
    let (n1, n2) = (grid.n1(), grid.n2());
    let dim = a.dim();
    let mut planner = FftPlanner::<f64>::new();
    let fwd1 = planner.plan_fft_forward(n1);
    let fwd2 = planner.plan_fft_forward(n2);
    let inv1 = planner.plan_fft_inverse(n1);
    let inv2 = planner.plan_fft_inverse(n2);
    let norm = 1.0 / (n1 * n2) as f64;

    // Symbol of -i d/dk_axis on the mode e^{i k.R}: multiply by R_axis.
    let symbol: Vec<f64> = (0..n1 * n2)
        .map(|node| {
            let (p1, p2) = grid.coords(node);
            match (signed_mode(p1, n1), signed_mode(p2, n2)) {
                (Some(r1), Some(r2)) => (r1 as f64 * c1 + r2 as f64 * c2) * norm,
                _ => 0.0,
            }
        })
        .collect();

    let entries: Vec<Vec<Complex64>> = (0..dim * dim)
        .into_par_iter()
        .map(|e| {
            let (r, c) = (e / dim, e % dim);
            let mut buf: Vec<Complex64> = a.nodes().iter().map(|m| m[(r, c)]).collect();
            // Grid values are A(k_m) = sum_R A_R e^{+2 pi i m.p/n}; forward FFT
            // (negative exponent) recovers n1*n2*A_R.
            fft_2d(&mut buf, n1, n2, fwd1.as_ref(), fwd2.as_ref());
            for (v, s) in buf.iter_mut().zip(&symbol) {
                *v *= *s;
            }
            fft_2d(&mut buf, n1, n2, inv1.as_ref(), inv2.as_ref());
            buf
        })
        .collect();

    let data = (0..grid.len())
        .map(|node| CMatrix::from_fn(dim, dim, |r, c| entries[r * dim + c][node]))
        .collect();
    FiberOperator::from_nodes(grid, dim, data).expect("derivative keeps the shape")
}

fn fft_2d(buf: &mut [Complex64], n1: usize, n2: usize, along1: &dyn rustfft::Fft<f64>, along2: &dyn rustfft::Fft<f64>) {
    // rows (fixed m1) are contiguous
    along2.process(buf);
    let mut column = vec![Complex64::new(0.0, 0.0); n1];
    for m2 in 0..n2 {
        for m1 in 0..n1 {
            column[m1] = buf[m1 * n2 + m2];
        }
        along1.process(&mut column);
        for m1 in 0..n1 {
            buf[m1 * n2 + m2] = column[m1];
        }
    }
}

fn difference_position_commutator(a: &FiberOperator, c1: f64, c2: f64) -> FiberOperator {
    // With k = s1 b1 + s2 b2: d/dk_axis = (a1_axis d/ds1 + a2_axis d/ds2) / 2pi.
    let grid = a.grid().clone();
    let (n1, n2) = (grid.n1(), grid.n2());
    let two_pi = 2.0 * std::f64::consts::PI;
    FiberOperator::from_fn(grid.clone(), a.dim(), |node| {
        let (m1, m2) = grid.coords(node);
        let fwd1 = a.node(grid.index(m1 + 1, m2));
        let back1 = a.node(grid.index(m1 + n1 - 1, m2));
        let fwd2 = a.node(grid.index(m1, m2 + 1));
        let back2 = a.node(grid.index(m1, m2 + n2 - 1));
        let ds1 = (fwd1 - back1) * Complex64::new(n1 as f64 / 2.0, 0.0);
        let ds2 = (fwd2 - back2) * Complex64::new(n2 as f64 / 2.0, 0.0);
        let deriv = (ds1 * Complex64::new(c1, 0.0) + ds2 * Complex64::new(c2, 0.0)) / Complex64::new(two_pi, 0.0);
        deriv * (-I)
    })
}

#[derive(Clone, Debug)]
pub struct ProjectionField {
    op: FiberOperator,
    rank: usize,
}

impl ProjectionField {
    /// Validates idempotency, hermiticity and constant integer rank.
    pub fn new(op: FiberOperator) -> Result<Self> {
        let mut rank: Option<usize> = None;
        for (node, p) in op.nodes().iter().enumerate() {
            let herm = (p - p.adjoint()).norm();
            if herm >= HERMITICITY_TOL {
                return Err(Error::InvalidProjection(format!(
                    "hermiticity defect {herm:e} at node {node}"
                )));
            }
            let idem = (p * p - p).norm();
            if idem >= PROJECTOR_TOL {
                return Err(Error::InvalidProjection(format!(
                    "idempotency defect {idem:e} at node {node}"
                )));
            }
            let tr = p.trace();
            let m = tr.re.round();
            if (tr - Complex64::new(m, 0.0)).norm() >= PROJECTOR_TOL || m < 0.0 {
                return Err(Error::InvalidProjection(format!(
                    "non-integer trace {tr} at node {node}"
                )));
            }
            match rank {
                None => rank = Some(m as usize),
                Some(r) if r != m as usize => {
                    return Err(Error::InvalidProjection(format!(
                        "rank changes from {r} to {m} at node {node}"
                    )))
                }
                _ => {}
            }
        }
        let rank = rank.unwrap_or(0);
        if rank == 0 {
            return Err(Error::InvalidProjection("rank zero".into()));
        }
        Ok(Self { op, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn op(&self) -> &FiberOperator {
        &self.op
    }

    pub fn into_op(self) -> FiberOperator {
        self.op
    }

    pub fn grid(&self) -> &Arc<KGrid> {
        self.op.grid()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// `1 - P`.
    pub fn complement(&self) -> FiberOperator {
        let id = CMatrix::identity(self.dim(), self.dim());
        self.op.map(|p| &id - p)
    }

    /// `U P U^dagger`, validated again as a projection.
    pub fn conjugate(&self, u: &FiberOperator) -> Result<Self> {
        let conj = u.zip_with(&self.op, |u, p| u * p * u.adjoint())?;
        Self::new(conj)
    }
}

/// `P A P^perp + P^perp A P`.
pub fn off_diagonal(a: &FiberOperator, p: &ProjectionField) -> Result<FiberOperator> {
    let id = CMatrix::identity(p.dim(), p.dim());
    a.zip_with(p.op(), |a, p| {
        let q = &id - p;
        p * a * &q + &q * a * p
    })
}

/// Nodewise `||A^OD - A||` maximum; zero when `A` is purely off-diagonal.
pub fn off_diagonal_residual(a: &FiberOperator, p: &ProjectionField) -> Result<f64> {
    a.sup_distance(&off_diagonal(a, p)?)
}

/// `(1/|C|) * mean_k Tr A(k)`.
pub fn trace_per_unit_volume(a: &FiberOperator) -> Complex64 {
    let grid = a.grid();
    let mean = bz_mean(&a.traces(), grid).expect("one trace per node");
    mean / grid.lattice().cell_area()
}

/// Largest singular value of a single matrix.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn sup_fiber_norm(a: &FiberOperator) -> f64 {
    a.nodes().par_iter().map(operator_norm).reduce(|| 0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `e^{i t S(k)}` nodewise.
pub fn unitary_exp(s: &FiberOperator, t: f64) -> Result<FiberOperator> {
    let scale_ref = sup_fiber_norm(s).max(1.0);
    let deviation = s.hermiticity_defect();
    if deviation >= HERMITICITY_TOL * scale_ref {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(s.map(|m| {
        let (vals, vecs) = hermitian_eigen(m);
        let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&e| Complex64::from_polar(1.0, t * e)),
        ));
        &vecs * phases * vecs.adjoint()
    }))
}

/// Largest nodewise `||U U^dagger - 1||`.
pub fn unitarity_defect(u: &FiberOperator) -> f64 {
    let id = CMatrix::identity(u.dim(), u.dim());
    u.nodes()
        .iter()
        .map(|m| (m * m.adjoint() - &id).norm())
        .fold(0.0, f64::max)
}

/// Writes the text dump `node row col re im`, one entry per line.
pub fn write_dump<W: Write>(a: &FiberOperator, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# fiber dump n1={} n2={} dim={}",
        a.grid().n1(),
        a.grid().n2(),
        a.dim()
    )?;
    for (node, m) in a.nodes().iter().enumerate() {
        for r in 0..a.dim() {
            for c in 0..a.dim() {
                let z = m[(r, c)];
                writeln!(out, "{node} {r} {c} {:e} {:e}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}

/// Reads a dump produced by [`write_dump`] back onto `grid`.
pub fn read_dump<R: BufRead>(grid: Arc<KGrid>, dim: usize, input: R) -> Result<FiberOperator> {
    let mut data = vec![CMatrix::zeros(dim, dim); grid.len()];
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, got {}", fields.len())));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|e| parse_err(e.to_string()));
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(e.to_string()));
        let (node, r, c) = (idx(fields[0])?, idx(fields[1])?, idx(fields[2])?);
        if node >= grid.len() || r >= dim || c >= dim {
            return Err(parse_err(format!("index ({node}, {r}, {c}) out of range")));
        }
        data[node][(r, c)] = Complex64::new(num(fields[3])?, num(fields[4])?);
    }
    FiberOperator::from_nodes(grid, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BravaisLattice;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid(n: usize) -> Arc<KGrid> {
        Arc::new(KGrid::new(BravaisLattice::square(), n, n).unwrap())
    }

    fn pauli() -> [CMatrix; 3] {
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        [
            CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
            CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
            CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        ]
    }

    /// Smooth test field with a few Fourier modes.
    fn smooth(grid: &Arc<KGrid>) -> FiberOperator {
        let [sx, sy, sz] = pauli();
        let g = grid.clone();
        FiberOperator::from_fn(grid.clone(), 2, move |i| {
            let p1 = g.phase(i, [1, 0]);
            let p2 = g.phase(i, [0, 1]);
            let p3 = g.phase(i, [1, -2]);
            &sx * c(p1.cos() + 0.3 * p3.sin(), 0.0) + &sy * c(p2.sin(), 0.0) + &sz * c(0.5 + p3.cos(), 0.0)
        })
    }

    #[test]
    fn self_commutator_vanishes() {
        let g = grid(6);
        let a = smooth(&g);
        assert_eq!(sup_fiber_norm(&a.commutator(&a).unwrap()), 0.0);
    }

    #[test]
    fn dagger_is_involution() {
        let g = grid(5);
        let a = smooth(&g).scale(c(0.2, 1.1));
        assert_eq!(a.dagger().dagger().sup_distance(&a).unwrap(), 0.0);
    }

    #[test]
    fn pauli_commutator() {
        let g = grid(3);
        let [sx, sy, sz] = pauli();
        let x = FiberOperator::constant(g.clone(), &sx);
        let y = FiberOperator::constant(g.clone(), &sy);
        let expected = FiberOperator::constant(g, &(sz * c(0.0, 2.0)));
        assert!(x.commutator(&y).unwrap().sup_distance(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn mismatched_shapes() {
        let a = FiberOperator::identity(grid(3), 2);
        let b = FiberOperator::identity(grid(3), 3);
        let d = FiberOperator::identity(grid(4), 2);
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch(_))));
        assert!(matches!(a.mul(&d), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn constant_has_no_derivative() {
        let g = grid(8);
        let [sx, ..] = pauli();
        let a = FiberOperator::constant(g, &sx);
        assert!(sup_fiber_norm(&commutator_with_position(&a, Axis::X)) < 1e-15);
    }

    #[test]
    fn single_mode_derivative() {
        // A(k) = e^{i k.a1} E11 ; [A, X] = -i d/dkx A = e^{i k.a1} E11
        let g = grid(8);
        let gg = g.clone();
        let a = FiberOperator::from_fn(g.clone(), 2, move |i| {
            let mut m = CMatrix::zeros(2, 2);
            m[(0, 0)] = Complex64::from_polar(1.0, gg.phase(i, [1, 0]));
            m
        });
        let d = commutator_with_position(&a, Axis::X);
        assert!(d.sup_distance(&a).unwrap() < 1e-13);
        assert!(sup_fiber_norm(&commutator_with_position(&a, Axis::Y)) < 1e-13);
    }

    #[test]
    fn derivative_on_oblique_lattice() {
        // e^{i k.R} with R = a1 - 2 a2 on a triangular lattice: -i d/dk_j -> R_j
        let lat = BravaisLattice::triangular();
        let g = Arc::new(KGrid::new(lat, 9, 10).unwrap());
        let gg = g.clone();
        let r = [1, -2];
        let a = FiberOperator::from_fn(g.clone(), 1, move |i| {
            CMatrix::from_element(1, 1, Complex64::from_polar(1.0, gg.phase(i, r)))
        });
        let rv = lat.vector(r);
        for (axis, comp) in [(Axis::X, rv[0]), (Axis::Y, rv[1])] {
            let d = commutator_with_position(&a, axis);
            let expected = a.scale(c(comp, 0.0));
            assert!(d.sup_distance(&expected).unwrap() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_fallback_is_close() {
        let lat = BravaisLattice::square();
        let fine = Arc::new(
            KGrid::new(lat, 64, 64)
                .unwrap()
                .with_scheme(DerivativeScheme::CentralDifference),
        );
        let spectral = Arc::new(KGrid::new(lat, 64, 64).unwrap());
        let a_fd = smooth(&fine);
        let a_sp = smooth(&spectral);
        let d_fd = commutator_with_position(&a_fd, Axis::Y);
        let d_sp = commutator_with_position(&a_sp, Axis::Y);
        let err = d_fd
            .nodes()
            .iter()
            .zip(d_sp.nodes())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        // second order: error ~ (2 pi / 64)^2 * |R|^3 / 6
        assert!(err < 0.02, "fd error {err}");
        assert!(err > 1e-6);
    }

    #[test]
    fn derivative_trace_vanishes() {
        let g = grid(12);
        let a = smooth(&g);
        for axis in [Axis::X, Axis::Y] {
            assert!(trace_per_unit_volume(&commutator_with_position(&a, axis)).norm() < 1e-12);
        }
    }

    #[test]
    fn position_commutator_preserves_hermiticity() {
        let g = grid(10);
        let a = smooth(&g);
        assert!(a.is_hermitian(1e-14));
        // [A, X] is anti-Hermitian, dA/dk Hermitian
        let d = commutator_with_position(&a, Axis::X);
        assert!(sup_fiber_norm(&d.add(&d.dagger()).unwrap()) < 1e-12);
        assert!(k_derivative(&a, Axis::Y).is_hermitian(1e-12));
    }

    #[test]
    fn block_off_diagonal() {
        let g = grid(2);
        let p = ProjectionField::new(FiberOperator::constant(
            g.clone(),
            &CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        ))
        .unwrap();
        let a = FiberOperator::constant(
            g.clone(),
            &CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(3.0, 0.0), c(4.0, -1.0)]),
        );
        let od = off_diagonal(&a, &p).unwrap();
        let expected = FiberOperator::constant(
            g,
            &CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 1.0), c(3.0, 0.0), c(0.0, 0.0)]),
        );
        assert!(od.sup_distance(&expected).unwrap() < 1e-15);
        assert!(sup_fiber_norm(&off_diagonal(p.op(), &p).unwrap()) < 1e-15);
    }

    #[test]
    fn corrupted_projection_rejected() {
        let g = grid(2);
        let bad = CMatrix::from_row_slice(2, 2, &[c(0.9, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let err = ProjectionField::new(FiberOperator::constant(g, &bad)).unwrap_err();
        assert!(matches!(err, Error::InvalidProjection(_)));
        assert_eq!(err.module(), "fiber");
    }

    #[test]
    fn trace_per_unit_volume_examples() {
        let g = grid(4);
        assert!((trace_per_unit_volume(&FiberOperator::identity(g.clone(), 2)) - c(2.0, 0.0)).norm() < 1e-15);
        let gg = g.clone();
        let wave = FiberOperator::from_fn(g.clone(), 2, move |i| {
            CMatrix::identity(2, 2) * Complex64::from_polar(1.0, gg.phase(i, [1, 0]))
        });
        assert!(trace_per_unit_volume(&wave).norm() < 1e-15);
        // rectangular cell of area 2 halves the density
        let rect = Arc::new(KGrid::new(BravaisLattice::new([2.0, 0.0], [0.0, 1.0]).unwrap(), 3, 3).unwrap());
        let tr = trace_per_unit_volume(&FiberOperator::identity(rect, 2));
        assert!((tr - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sup_norm_examples() {
        let g = grid(8);
        assert_eq!(sup_fiber_norm(&FiberOperator::zeros(g.clone(), 2)), 0.0);
        let [sx, ..] = pauli();
        assert!((sup_fiber_norm(&FiberOperator::constant(g.clone(), &sx)) - 1.0).abs() < 1e-14);
        let gg = g.clone();
        let a = FiberOperator::from_fn(g.clone(), 2, move |i| {
            let mut m = CMatrix::zeros(2, 2);
            m[(0, 0)] = c(2.0 * gg.phase(i, [1, 0]).cos(), 0.0);
            m
        });
        let scan = (0..g.len())
            .map(|i| (2.0 * g.phase(i, [1, 0]).cos()).abs())
            .fold(0.0, f64::max);
        assert!((sup_fiber_norm(&a) - scan).abs() < 1e-14);
        assert!((scan - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_examples() {
        let g = grid(3);
        let [_, _, sz] = pauli();
        let s = FiberOperator::constant(g.clone(), &sz);
        let id = FiberOperator::identity(g.clone(), 2);
        assert!(unitary_exp(&s, 0.0).unwrap().sup_distance(&id).unwrap() < 1e-15);

        let u = unitary_exp(&s, PI / 2.0).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[I, c(0.0, 0.0), c(0.0, 0.0), -I]);
        assert!(u.sup_distance(&FiberOperator::constant(g.clone(), &expected)).unwrap() < 1e-15);

        let s = smooth(&grid(6));
        let fwd = unitary_exp(&s, 0.8).unwrap();
        let back = unitary_exp(&s, -0.8).unwrap();
        let prod = fwd.mul(&back).unwrap();
        assert!(
            prod.sup_distance(&FiberOperator::identity(s.grid().clone(), 2))
                .unwrap()
                < 1e-12
        );
        assert!(unitarity_defect(&fwd) < UNITARITY_TOL);
    }

    #[test]
    fn exponential_rejects_non_hermitian() {
        let g = grid(2);
        let a = FiberOperator::constant(
            g,
            &CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        );
        assert!(matches!(unitary_exp(&a, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn dump_round_trip() {
        let g = grid(3);
        let a = smooth(&g).scale(c(0.7, -0.3));
        let mut buf = Vec::new();
        write_dump(&a, &mut buf).unwrap();
        let back = read_dump(g, 2, buf.as_slice()).unwrap();
        assert_eq!(back.sup_distance(&a).unwrap(), 0.0);
    }
}
