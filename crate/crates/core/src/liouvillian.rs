//! Inverse of the Liouvillian `B -> -i[H, B]` on operators off-diagonal with
//! respect to the Fermi projection.
//!
//! Two independent routes:
//!
//! * spectral: in the eigenbasis of `H(k)`, `B_mn = i A_mn / (E_m - E_n)`;
//! * contour: `B = (1/2 pi) \oint dz (H - z)^{-1} [P, A] (H - z)^{-1}` around
//!   the occupied spectrum, discretized with the trapezoidal rule.
//!
//! The spectral route is the one used by the generator recursion.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{
    hermitian_eigen, k_derivative, off_diagonal_residual, Axis, CMatrix, FiberOperator, ProjectionField, I,
};
use crate::models::GapReport;

/// Tolerance on the off-diagonality of the right-hand side.
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;

/// Eigenvectors whose projection weight is further than this from 0 or 1 mean
/// the projection is not spectral for `H`.
const CHARACTER_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: Complex64,
    pub radius: f64,
    pub nodes: usize,
}

impl ContourSpec {
    pub const DEFAULT_NODES: usize = 128;

    /// Circle centred on the occupied range, reaching half a gap beyond it on
    /// both sides.
    pub fn around_occupied(report: &GapReport, nodes: usize) -> Self {
        let lo = report.occupied_min;
        let hi = report.gap_lower;
        Self {
            center: Complex64::new(0.5 * (lo + hi), 0.0),
            radius: 0.5 * (hi - lo) + 0.5 * report.gap_width,
            nodes,
        }
    }

    /// `(z_j, w_j)` with `sum_j w_j f(z_j) ~ \oint f(z) dz`.
    pub fn quadrature(&self) -> Vec<(Complex64, Complex64)> {
        let m = self.nodes as f64;
        (0..self.nodes)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / m;
                let e = Complex64::from_polar(self.radius, theta);
                (self.center + e, I * e * (2.0 * PI / m))
            })
            .collect()
    }
}

struct Spectrum {
    values: Vec<f64>,
    vectors: CMatrix,
    occupied: Vec<bool>,
}

fn classify(h: &CMatrix, p: &CMatrix) -> Result<Spectrum> {
    let (values, vectors) = hermitian_eigen(h);
    let mut occupied = Vec::with_capacity(values.len());
    for j in 0..values.len() {
        let v = vectors.column(j);
        let w = (v.adjoint() * p * v)[(0, 0)].re;
        if (w - 1.0).abs() < CHARACTER_TOL {
            occupied.push(true);
        } else if w.abs() < CHARACTER_TOL {
            occupied.push(false);
        } else {
            return Err(Error::GapViolation(format!(
                "eigenvector with projection weight {w} is neither occupied nor empty"
            )));
        }
    }
    Ok(Spectrum {
        values,
        vectors,
        occupied,
    })
}

fn check_inputs(h: &FiberOperator, pi0: &ProjectionField, a: &FiberOperator) -> Result<()> {
    if h.dim() != pi0.dim() || h.dim() != a.dim() || h.len() != a.len() || h.len() != pi0.op().len() {
        return Err(Error::ShapeMismatch("H, P and A must share grid and dimension".into()));
    }
    let residual = off_diagonal_residual(a, pi0)?;
    let scale = crate::fiber::sup_fiber_norm(a).max(1.0);
    if residual >= OFF_DIAGONAL_TOL * scale {
        return Err(Error::NotOffDiagonal { residual });
    }
    Ok(())
}

/// Unique off-diagonal `B` with `-i[H, B] = A`.
pub fn inverse_liouvillian_spectral(
    h: &FiberOperator,
    pi0: &ProjectionField,
    a: &FiberOperator,
) -> Result<FiberOperator> {
    check_inputs(h, pi0, a)?;
    let spectra: Vec<Spectrum> = h
        .nodes()
        .par_iter()
        .zip(pi0.op().nodes().par_iter())
        .map(|(h, p)| classify(h, p))
        .collect::<Result<_>>()?;

    // Global separation between occupied and empty eigenvalues.
    let top = spectra
        .iter()
        .flat_map(|s| s.values.iter().zip(&s.occupied).filter(|(_, o)| **o).map(|(e, _)| *e))
        .fold(f64::NEG_INFINITY, f64::max);
    let bottom = spectra
        .iter()
        .flat_map(|s| s.values.iter().zip(&s.occupied).filter(|(_, o)| !**o).map(|(e, _)| *e))
        .fold(f64::INFINITY, f64::min);
    let gap = bottom - top;
    if gap <= 0.0 {
        return Err(Error::GapViolation(format!(
            "occupied spectrum reaches {top}, empty spectrum starts at {bottom}"
        )));
    }

    let dim = h.dim();
    let data: Vec<CMatrix> = spectra
        .par_iter()
        .zip(a.nodes().par_iter())
        .map(|(s, a)| {
            let v = &s.vectors;
            let a_eig = v.adjoint() * a * v;
            let mut b = CMatrix::zeros(dim, dim);
            for m in 0..dim {
                for n in 0..dim {
                    if s.occupied[m] != s.occupied[n] {
                        let de = s.values[m] - s.values[n];
                        if de.abs() < 0.5 * gap {
                            return Err(Error::GapViolation(format!(
                                "energy difference {de} below half the gap {gap}"
                            )));
                        }
                        b[(m, n)] = I * a_eig[(m, n)] / de;
                    }
                }
            }
            Ok(v * b * v.adjoint())
        })
        .collect::<Result<_>>()?;
    FiberOperator::from_nodes(h.grid().clone(), dim, data)
}

/// Nodewise `dP/dk_axis` for the spectral projection `P` of `H`, from
/// `-i[H, dP] = i[dH, P]`. Only `H` is differentiated on the grid, which is
/// exact once the grid resolves every hopping; differentiating `P` itself
/// leaves aliasing errors in its diagonal blocks.
pub fn projection_derivative(h: &FiberOperator, pi0: &ProjectionField, axis: Axis) -> Result<FiberOperator> {
    let rhs = k_derivative(h, axis).commutator(pi0.op())?.scale(I);
    inverse_liouvillian_spectral(h, pi0, &rhs)
}

/// Contour-integral route to the same `B`.
pub fn inverse_liouvillian_contour(
    h: &FiberOperator,
    pi0: &ProjectionField,
    a: &FiberOperator,
    contour: &ContourSpec,
) -> Result<FiberOperator> {
    check_inputs(h, pi0, a)?;
    if contour.nodes == 0 || !(contour.radius > 0.0) {
        return Err(Error::Validation("contour needs positive radius and node count".into()));
    }
    let quad = contour.quadrature();
    let dim = h.dim();
    let id = CMatrix::identity(dim, dim);

    // distance from the circle to the nearest eigenvalue
    let nearest = h
        .nodes()
        .par_iter()
        .map(|m| {
            let (vals, _) = hermitian_eigen(m);
            vals.iter()
                .map(|&e| ((Complex64::new(e, 0.0) - contour.center).norm() - contour.radius).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    if nearest < 1e-10 {
        return Err(Error::ContourHitsSpectrum { distance: nearest });
    }

    let data: Vec<CMatrix> = h
        .nodes()
        .par_iter()
        .zip(pi0.op().nodes().par_iter())
        .zip(a.nodes().par_iter())
        .map(|((h, p), a)| {
            let comm = p * a - a * p;
            let mut b = CMatrix::zeros(dim, dim);
            for &(z, w) in &quad {
                let shifted = h - &id * z;
                let lu = shifted.clone().lu();
                let left = lu.solve(&comm).ok_or(Error::SingularResolvent { re: z.re, im: z.im })?;
                // right factor: X (H - z) = Y  <=>  (H - z)^T X^T = Y^T
                let right = shifted
                    .transpose()
                    .lu()
                    .solve(&left.transpose())
                    .ok_or(Error::SingularResolvent { re: z.re, im: z.im })?
                    .transpose();
                b += right * w;
            }
            Ok(b / Complex64::new(2.0 * PI, 0.0))
        })
        .collect::<Result<_>>()?;
    FiberOperator::from_nodes(h.grid().clone(), dim, data)
}

/// `max_k ||-i[H, B] - A||`.
pub fn defining_residual(h: &FiberOperator, b: &FiberOperator, a: &FiberOperator) -> Result<f64> {
    let lhs = h.commutator(b)?.scale(-I);
    lhs.sup_distance(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{off_diagonal, sup_fiber_norm};
    use crate::lattice::{BravaisLattice, KGrid};
    use crate::models::{build_hamiltonian, fermi_projection, pauli_x, pauli_y, qwz};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_level() -> (Arc<KGrid>, FiberOperator, ProjectionField, GapReport) {
        let g = Arc::new(KGrid::new(BravaisLattice::square(), 2, 2).unwrap());
        let h = FiberOperator::constant(
            g.clone(),
            &CMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
        );
        let (p, report) = fermi_projection(&h, 0.0).unwrap();
        (g, h, p, report)
    }

    /// Direct 2x2 Sylvester solve: with H = diag(h0, h1) the equation
    /// -i (h_m - h_n) B_mn = A_mn is solved entry by entry.
    fn sylvester_2x2(h: [f64; 2], a: &CMatrix) -> CMatrix {
        CMatrix::from_fn(2, 2, |m, n| {
            if m == n {
                c(0.0, 0.0)
            } else {
                a[(m, n)] / (-I * (h[m] - h[n]))
            }
        })
    }

    #[test]
    fn zero_maps_to_zero() {
        let (g, h, p, report) = two_level();
        let zero = FiberOperator::zeros(g, 2);
        assert_eq!(
            sup_fiber_norm(&inverse_liouvillian_spectral(&h, &p, &zero).unwrap()),
            0.0
        );
        let contour = ContourSpec::around_occupied(&report, 16);
        assert_eq!(
            sup_fiber_norm(&inverse_liouvillian_contour(&h, &p, &zero, &contour).unwrap()),
            0.0
        );
    }

    #[test]
    fn two_level_examples() {
        let (g, h, p, _) = two_level();
        let cases = [
            (
                pauli_x(),
                CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.0, 0.0)]),
            ),
            (pauli_y(), pauli_x() * c(-0.5, 0.0)),
        ];
        for (a, expected) in cases {
            assert!((sylvester_2x2([-1.0, 1.0], &a) - &expected).norm() < 1e-15);
            let af = FiberOperator::constant(g.clone(), &a);
            let b = inverse_liouvillian_spectral(&h, &p, &af).unwrap();
            assert!(b.sup_distance(&FiberOperator::constant(g.clone(), &expected)).unwrap() < 1e-14);
            assert!(defining_residual(&h, &b, &af).unwrap() < 1e-14);

            let contour = ContourSpec {
                center: c(-1.0, 0.0),
                radius: 0.5,
                nodes: 64,
            };
            let bc = inverse_liouvillian_contour(&h, &p, &af, &contour).unwrap();
            assert!(bc.sup_distance(&b).unwrap() < 1e-10);
        }
    }

    #[test]
    fn rejects_diagonal_input() {
        let (g, h, p, _) = two_level();
        let a = FiberOperator::identity(g, 2);
        assert!(matches!(
            inverse_liouvillian_spectral(&h, &p, &a),
            Err(Error::NotOffDiagonal { .. })
        ));
    }

    #[test]
    fn rejects_non_spectral_projection() {
        let (g, h, _, _) = two_level();
        let half = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)]);
        let p = ProjectionField::new(FiberOperator::constant(g.clone(), &half)).unwrap();
        let a = off_diagonal(&FiberOperator::constant(g, &pauli_y()), &p).unwrap();
        assert!(matches!(
            inverse_liouvillian_spectral(&h, &p, &a),
            Err(Error::GapViolation(_))
        ));
    }

    #[test]
    fn contour_touching_spectrum() {
        let (g, h, p, _) = two_level();
        let a = FiberOperator::constant(g, &pauli_x());
        let contour = ContourSpec {
            center: c(0.0, 0.0),
            radius: 1.0,
            nodes: 32,
        };
        assert!(matches!(
            inverse_liouvillian_contour(&h, &p, &a, &contour),
            Err(Error::ContourHitsSpectrum { .. })
        ));
    }

    #[test]
    fn qwz_routes_agree() {
        let g = Arc::new(KGrid::new(BravaisLattice::square(), 16, 16).unwrap());
        let h = build_hamiltonian(&qwz(1.0), &g).unwrap();
        let (p, report) = fermi_projection(&h, 0.0).unwrap();
        let a = off_diagonal(&crate::fiber::k_derivative(&h, crate::fiber::Axis::Y), &p).unwrap();
        let bs = inverse_liouvillian_spectral(&h, &p, &a).unwrap();
        let bc = inverse_liouvillian_contour(&h, &p, &a, &ContourSpec::around_occupied(&report, 128)).unwrap();
        assert!(bs.sup_distance(&bc).unwrap() < 1e-8);
        assert!(defining_residual(&h, &bs, &a).unwrap() < 1e-10);
        assert!(bs.is_hermitian(1e-10));
    }
}
