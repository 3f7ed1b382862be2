//! Transport observables and their independent checks.
//!
//! Conventions: the field points along `y`, the current is measured along `x`,
//! `J = i[H0, X]` has fiber `dH0/dk_x`, and
//!
//! ```text
//! sigma_Hall = i tau(P0 [[P0, X], [P0, Y]]),     [P, X_j](k) = -i dP/dk_j.
//! ```
//!
//! With these conventions `2 pi sigma_Hall` equals the plaquette Chern number
//! returned by [`chern_number_fhs`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{
    commutator_with_position, hermitian_eigen, trace_per_unit_volume, unitarity_defect, Axis, CMatrix, FiberOperator,
    ProjectionField, I,
};
use crate::models::{analytic_velocity, HoppingModel, GAP_CLOSED_TOL};
use crate::neass::{assemble_neass, build_generators_with_gauge, DiagonalGauge, OffDiagonalGauge};

/// Residuals below this are indistinguishable from roundoff.
pub const NOISE_FLOOR: f64 = 1e-13;

/// Minimum number of points for a scaling fit.
pub const MIN_FIT_POINTS: usize = 4;

/// `i P [[P, X], [P, Y]]` as a field; its trace per unit volume is the Chern marker.
fn chern_marker_field(p: &FiberOperator) -> FiberOperator {
    let cx = commutator_with_position(p, Axis::X);
    let cy = commutator_with_position(p, Axis::Y);
    let inner = cx.commutator(&cy).expect("same shape");
    p.mul(&inner).expect("same shape").scale(I)
}

/// Complex Chern marker `i tau(P [[P, X], [P, Y]])`; the imaginary part is a
/// diagnostic and vanishes for a genuine projection.
pub fn chern_marker(p: &ProjectionField) -> Complex64 {
    trace_per_unit_volume(&chern_marker_field(p.op()))
}

pub fn hall_conductivity(pi0: &ProjectionField) -> f64 {
    chern_marker(pi0).re
}

/// Orthonormal frame spanning the range of `p` (columns).
fn occupied_frame(p: &CMatrix, rank: usize) -> CMatrix {
    let (_, vecs) = hermitian_eigen(p);
    let n = p.nrows();
    vecs.columns(n - rank, rank).into_owned()
}

/// Plaquette (link-variable) Chern number of the projection field.
///
/// Links are `U_i(k) = det(V(k)^dagger V(k + e_i))` along the two grid
/// directions; the field strength on each plaquette is the argument of the
/// oriented product of four links.
pub fn chern_number_fhs(pi0: &ProjectionField) -> Result<i64> {
    let grid = pi0.grid().clone();
    let rank = pi0.rank();
    let frames: Vec<CMatrix> = pi0.op().nodes().par_iter().map(|p| occupied_frame(p, rank)).collect();
    let link = |from: usize, to: usize| -> Result<Complex64> {
        let d = (frames[from].adjoint() * &frames[to]).determinant();
        let modulus = d.norm();
        if modulus < 1e-10 {
            return Err(Error::OracleInconclusive { node: from, modulus });
        }
        Ok(d / modulus)
    };
    let mut total = 0.0;
    for node in 0..grid.len() {
        let (m1, m2) = grid.coords(node);
        let k1 = grid.index(m1 + 1, m2);
        let k2 = grid.index(m1, m2 + 1);
        let u1 = link(node, k1)?;
        let u2_shift = link(k1, grid.index(m1 + 1, m2 + 1))?;
        let u1_shift = link(k2, grid.index(m1 + 1, m2 + 1))?;
        let u2 = link(node, k2)?;
        total += (u1 * u2_shift * u1_shift.conj() * u2.conj()).arg();
    }
    let orientation = grid.lattice().orientation();
    Ok((orientation * total / (2.0 * PI)).round() as i64)
}

/// `tau(J P)` with `J = i[H0, X]`, returned as `(real, imaginary)`.
pub fn response_current_complex(model: &HoppingModel, pi: &ProjectionField) -> Result<Complex64> {
    let j = analytic_velocity(model, pi.grid(), Axis::X)?;
    Ok(trace_per_unit_volume(&j.mul(pi.op())?))
}

pub fn response_current(model: &HoppingModel, pi: &ProjectionField) -> Result<f64> {
    Ok(response_current_complex(model, pi)?.re)
}

/// `|tau([PAP, P X_j P])|`, split as `tau([PAP, X_j]) - tau([PAP, X_j^OD])`.
pub fn commutator_trace_check(p: &ProjectionField, a: &FiberOperator, axis: Axis) -> Result<f64> {
    let pap = p.op().mul(a)?.mul(p.op())?;
    let first = trace_per_unit_volume(&commutator_with_position(&pap, axis));
    // X^OD = [[X, P], P] with [X, P] = -[P, X]
    let x_p = commutator_with_position(p.op(), axis).scale(Complex64::new(-1.0, 0.0));
    let x_od = x_p.commutator(p.op())?;
    let second = trace_per_unit_volume(&pap.commutator(&x_od)?);
    Ok((first - second).norm())
}

/// `|marker(U P U^dagger) - marker(P)|` for a unitary field `U`.
pub fn chern_simons_check(p: &ProjectionField, u: &FiberOperator) -> Result<f64> {
    let deviation = unitarity_defect(u);
    if deviation >= 1e-10 {
        return Err(Error::NotUnitary { deviation });
    }
    let pu = p.conjugate(u)?;
    Ok((chern_marker(&pu) - chern_marker(p)).norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealspaceTrace {
    /// `Tr(P) / (L^2 |C|)` over the whole torus.
    pub torus_average: f64,
    /// `Tr(chi_1 P chi_1) / |C|` for a single cell.
    pub single_cell: f64,
    pub occupied: usize,
}

/// Trace per unit volume of the Fermi projection computed in real space on an
/// `L x L` torus of cells by dense diagonalization.
pub fn tuv_realspace_oracle(model: &HoppingModel, l: usize) -> Result<RealspaceTrace> {
    if l == 0 || l % 2 == 0 {
        return Err(Error::Validation(format!("torus size {l} must be odd")));
    }
    let n = model.dim();
    let cells = l * l;
    let size = cells * n;
    let li = l as i64;
    let cell = |c1: i64, c2: i64| (c1.rem_euclid(li) * li + c2.rem_euclid(li)) as usize;
    let mut h = CMatrix::zeros(size, size);
    for c1 in 0..li {
        for c2 in 0..li {
            let from = cell(c1, c2);
            for (r, t) in model.hoppings() {
                let to = cell(c1 + r[0] as i64, c2 + r[1] as i64);
                // H_{x, x+R} = T_R
                for a in 0..n {
                    for b in 0..n {
                        h[(from * n + a, to * n + b)] += t[(a, b)];
                    }
                }
            }
        }
    }
    let (vals, vecs) = hermitian_eigen(&h);
    let mu = model.mu();
    if let Some(&e) = vals.iter().find(|e| (*e - mu).abs() < GAP_CLOSED_TOL) {
        return Err(Error::GapClosed {
            mu,
            eigenvalue: e,
            distance: (e - mu).abs(),
        });
    }
    let occupied = vals.iter().filter(|&&e| e < mu).count();
    // Diagonal of the spectral projector.
    let diag: Vec<f64> = (0..size)
        .map(|i| (0..occupied).map(|j| vecs[(i, j)].norm_sqr()).sum())
        .collect();
    let area = model.lattice().cell_area();
    let total: f64 = diag.iter().sum();
    let centre = cell(li / 2, li / 2);
    let single: f64 = diag[centre * n..(centre + 1) * n].iter().sum();
    Ok(RealspaceTrace {
        torus_average: total / (cells as f64 * area),
        single_cell: single / area,
        occupied,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: String,
    pub n: usize,
    pub epsilon: f64,
    pub current: f64,
    pub current_imag: f64,
    pub sigma_hall: f64,
    pub residual: f64,
    pub defect: f64,
}

impl SweepRecord {
    pub fn below_noise_floor(&self) -> bool {
        self.residual < NOISE_FLOOR
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    /// Points dropped for sitting below the noise floor.
    pub excluded: usize,
}

impl ScalingFit {
    /// Fewer than [`MIN_FIT_POINTS`] usable points.
    pub fn is_degenerate(&self) -> bool {
        self.points < MIN_FIT_POINTS
    }

    /// Every point was below the noise floor.
    pub fn at_noise_floor(&self) -> bool {
        self.points == 0 && self.excluded > 0
    }

    /// Slope at least `min_slope` with `r^2 >= min_r2`, or all residuals at the
    /// noise floor.
    pub fn meets(&self, min_slope: f64, min_r2: f64) -> bool {
        self.at_noise_floor() || (!self.is_degenerate() && self.slope >= min_slope && self.r_squared >= min_r2)
    }
}

/// Unweighted least squares of `log y` against `log x`, skipping points with
/// `y < NOISE_FLOOR`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> ScalingFit {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y >= NOISE_FLOOR)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let excluded = xs.len().min(ys.len()) - pts.len();
    let n = pts.len();
    if n < 2 {
        return ScalingFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            r_squared: f64::NAN,
            points: n,
            excluded,
        };
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    ScalingFit {
        slope,
        intercept,
        r_squared,
        points: n,
        excluded,
    }
}

/// `count` logarithmically spaced points from `10^lo` to `10^hi`.
pub fn log_range(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    /// Residual fits, one per order.
    pub residual_fits: Vec<(usize, ScalingFit)>,
    /// Stationarity-defect fits, one per order.
    pub defect_fits: Vec<(usize, ScalingFit)>,
    pub sigma_hall: f64,
}

/// For every order `n <= n_max` and every `eps`, compares `tau(J P_n^eps)`
/// with `eps * sigma_Hall` and records the stationarity defect.
pub fn residual_scaling_sweep(
    model: &HoppingModel,
    h: &FiberOperator,
    pi0: &ProjectionField,
    n_max: usize,
    epsilons: &[f64],
) -> Result<SweepResult> {
    residual_scaling_sweep_with_gauge(model, h, pi0, n_max, epsilons, &OffDiagonalGauge)
}

/// [`residual_scaling_sweep`] with a non-default diagonal gauge for the generators.
pub fn residual_scaling_sweep_with_gauge(
    model: &HoppingModel,
    h: &FiberOperator,
    pi0: &ProjectionField,
    n_max: usize,
    epsilons: &[f64],
    gauge: &dyn DiagonalGauge,
) -> Result<SweepResult> {
    if epsilons.len() < MIN_FIT_POINTS {
        return Err(Error::Validation(format!(
            "need at least {MIN_FIT_POINTS} epsilon values, got {}",
            epsilons.len()
        )));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::Validation(format!("epsilon {e} outside (0, 1]")));
    }
    let sigma = hall_conductivity(pi0);
    let all = build_generators_with_gauge(h, pi0, n_max, gauge)?;
    let mut records = Vec::new();
    let mut residual_fits = Vec::new();
    let mut defect_fits = Vec::new();
    for n in 1..=n_max {
        let gens = all.truncate(n);
        let rows: Vec<SweepRecord> = epsilons
            .par_iter()
            .map(|&eps| {
                let state = assemble_neass(h, pi0, &gens, eps)?;
                let current = response_current_complex(model, state.projection())?;
                Ok(SweepRecord {
                    model: model.name().to_string(),
                    n,
                    epsilon: eps,
                    current: current.re,
                    current_imag: current.im,
                    sigma_hall: sigma,
                    residual: (current.re - eps * sigma).abs(),
                    defect: state.defect(),
                })
            })
            .collect::<Result<_>>()?;
        let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        let defects: Vec<f64> = rows.iter().map(|r| r.defect).collect();
        residual_fits.push((n, fit_loglog(epsilons, &residuals)));
        defect_fits.push((n, fit_loglog(epsilons, &defects)));
        records.extend(rows);
    }
    Ok(SweepResult {
        records,
        residual_fits,
        defect_fits,
        sigma_hall: sigma,
    })
}

/// `n x n` grid on the model's lattice.
pub fn grid_of(model: &HoppingModel, n: usize) -> Result<Arc<crate::lattice::KGrid>> {
    Ok(Arc::new(crate::lattice::KGrid::new(*model.lattice(), n, n)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use crate::models::{build_hamiltonian, fermi_projection, flat, haldane, hofstadter, pauli_z, qwz};
    use crate::neass::HamiltonianGauge;

    fn qwz_setup(u: f64, n: usize) -> (HoppingModel, FiberOperator, ProjectionField) {
        let model = qwz(u);
        let g = grid_of(&model, n).unwrap();
        let h = build_hamiltonian(&model, &g).unwrap();
        let (p, _) = fermi_projection(&h, model.mu()).unwrap();
        (model, h, p)
    }

    fn hofstadter_chern(p: i64, q: usize, filled: usize, n: usize) -> (f64, i64) {
        let base = hofstadter(p, q, 1.0).unwrap();
        let g = grid_of(&base, n).unwrap();
        let model = base.place_mu_in_gap(&g, filled).unwrap();
        let h = build_hamiltonian(&model, &g).unwrap();
        let (pi, _) = fermi_projection(&h, model.mu()).unwrap();
        (2.0 * PI * hall_conductivity(&pi), chern_number_fhs(&pi).unwrap())
    }

    #[test]
    fn hofstadter_third_flux_is_quantized() {
        for filled in [1, 2] {
            let (two_pi_sigma, c) = hofstadter_chern(1, 3, filled, 48);
            assert_eq!(c.abs(), 1);
            assert!(
                (two_pi_sigma - c as f64).abs() < 1e-6,
                "filled {filled}: {two_pi_sigma} vs {c}"
            );
        }
    }

    #[test]
    fn hofstadter_fifth_flux_needs_a_fine_grid() {
        // the middle gaps carry |C| = 2 and are narrow
        let (coarse, c) = hofstadter_chern(1, 5, 2, 48);
        assert_eq!(c.abs(), 2);
        assert!((coarse - c as f64).abs() > 1e-6);
        let (fine, c) = hofstadter_chern(1, 5, 2, 96);
        assert!((fine - c as f64).abs() < 1e-6, "{fine} vs {c}");
    }

    #[test]
    fn haldane_trivial_phase() {
        let model = haldane(1.0, 0.1, PI / 2.0, 0.8);
        let g = grid_of(&model, 64).unwrap();
        let h = build_hamiltonian(&model, &g).unwrap();
        let (pi, _) = fermi_projection(&h, model.mu()).unwrap();
        assert_eq!(chern_number_fhs(&pi).unwrap(), 0);
        assert!((2.0 * PI * hall_conductivity(&pi)).abs() < 1e-6);
    }

    #[test]
    fn first_order_residual_is_cubic_for_insulators() {
        // the eps^2 current needs a Fermi surface, so n = 1 already gains an order
        let (model, h, p) = qwz_setup(1.0, 48);
        let sweep = residual_scaling_sweep(&model, &h, &p, 3, &log_range(-2.0, -0.5, 8)).unwrap();
        let (_, fit) = &sweep.residual_fits[0];
        assert!((fit.slope - 3.0).abs() < 0.1, "slope {}", fit.slope);
        let at = |n: usize| {
            sweep
                .records
                .iter()
                .find(|r| r.n == n && r.epsilon > 0.04)
                .unwrap()
                .residual
        };
        assert!(at(1) / at(3) > 100.0);
    }

    #[test]
    fn diagonal_gauge_changes_current_at_higher_order() {
        let (model, h, p) = qwz_setup(1.0, 24);
        let eps = log_range(-2.0, -0.5, 6);
        let plain = residual_scaling_sweep(&model, &h, &p, 2, &eps).unwrap();
        let gauged = residual_scaling_sweep_with_gauge(&model, &h, &p, 2, &eps, &HamiltonianGauge(0.4)).unwrap();
        for n in 1..=2 {
            let diffs: Vec<(f64, f64)> = plain
                .records
                .iter()
                .zip(&gauged.records)
                .filter(|(a, _)| a.n == n)
                .map(|(a, b)| (a.epsilon, (a.current - b.current).abs()))
                .collect();
            let (lo, hi) = (diffs[0], diffs[diffs.len() - 1]);
            let slope = (hi.1 / lo.1).ln() / (hi.0 / lo.0).ln();
            assert!(slope > n as f64 + 0.7, "n={n}: gauge difference slope {slope}");
        }
    }

    #[test]
    fn flat_model_is_trivial() {
        let model = flat(&pauli_z(), 0.0).unwrap();
        let g = grid_of(&model, 8).unwrap();
        let h = build_hamiltonian(&model, &g).unwrap();
        let (p, _) = fermi_projection(&h, 0.0).unwrap();
        assert_eq!(hall_conductivity(&p), 0.0);
        assert_eq!(chern_number_fhs(&p).unwrap(), 0);
        assert_eq!(response_current(&model, &p).unwrap(), 0.0);
    }

    #[test]
    fn qwz_quantized_and_signs() {
        let (_, _, p1) = qwz_setup(1.0, 48);
        let (_, _, pm1) = qwz_setup(-1.0, 48);
        let (_, _, p3) = qwz_setup(3.0, 48);
        let c1 = chern_number_fhs(&p1).unwrap();
        let cm1 = chern_number_fhs(&pm1).unwrap();
        assert_eq!(c1.abs(), 1);
        assert_eq!(cm1, -c1);
        assert_eq!(chern_number_fhs(&p3).unwrap(), 0);
        let s = 2.0 * PI * hall_conductivity(&p1);
        assert!((s - c1 as f64).abs() < 1e-8, "2 pi sigma = {s}, fhs = {c1}");
        assert!(chern_marker(&p1).im.abs() < 1e-10);
    }

    #[test]
    fn equilibrium_current_vanishes() {
        let (model, _, p) = qwz_setup(1.0, 32);
        assert!(response_current(&model, &p).unwrap().abs() < 1e-10);
    }

    #[test]
    fn identity_commutator_trace() {
        let (_, h, p) = qwz_setup(1.0, 16);
        let id = FiberOperator::identity(h.grid().clone(), 2);
        for axis in [Axis::X, Axis::Y] {
            assert!(commutator_trace_check(&p, &id, axis).unwrap() < 1e-14);
            assert!(commutator_trace_check(&p, &h, axis).unwrap() < 1e-10);
        }
    }

    #[test]
    fn identity_conjugation() {
        let (_, h, p) = qwz_setup(1.0, 16);
        let id = FiberOperator::identity(h.grid().clone(), 2);
        assert_eq!(chern_simons_check(&p, &id).unwrap(), 0.0);
        let not_unitary = id.scale(Complex64::new(2.0, 0.0));
        assert!(matches!(
            chern_simons_check(&p, &not_unitary),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn realspace_flat_and_qwz() {
        let model = flat(&pauli_z(), 0.0).unwrap();
        let t = tuv_realspace_oracle(&model, 3).unwrap();
        assert_eq!(t.torus_average, 1.0);
        assert!(tuv_realspace_oracle(&model, 4).is_err());
        let t = tuv_realspace_oracle(&qwz(1.0), 5).unwrap();
        assert!((t.torus_average - 1.0).abs() < 1e-10);
        assert!(matches!(
            tuv_realspace_oracle(&qwz(-2.0), 5),
            Err(Error::GapClosed { .. })
        ));
    }

    #[test]
    fn loglog_fit_recovers_power_law() {
        let xs = log_range(-2.0, -0.5, 8);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powi(3)).collect();
        let fit = fit_loglog(&xs, &ys);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.meets(2.7, 0.98));

        let floor = fit_loglog(&xs, &vec![0.0; 8]);
        assert!(floor.at_noise_floor() && floor.is_degenerate() && floor.meets(10.0, 1.0));
    }

    #[test]
    fn log_range_endpoints() {
        let r = log_range(-2.0, -0.5, 8);
        assert_eq!(r.len(), 8);
        assert!((r[0] - 0.01).abs() < 1e-15);
        assert!((r[7] - 10f64.powf(-0.5)).abs() < 1e-15);
    }
}
