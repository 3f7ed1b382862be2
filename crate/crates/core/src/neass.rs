//! Recursive construction of the NEASS generators.
//!
//! With `S = sum_{j=1}^n eps^{j-1} A_j` and `L_A(B) = -i[A, B]`, the conjugation
//! `e^{-i eps S} B e^{i eps S}` expands as `sum_j eps^j B_j` with
//!
//! ```text
//! B_j = sum_{m=1}^{j} 1/m! sum_{j_1 + .. + j_m = j} L_{A_{j_1}} L_{A_{j_2}} .. L_{A_{j_m}} (B)
//! ```
//!
//! over ordered compositions of `j`. Requiring `[H_{0,j} - Y_{j-1}, P0] = 0`
//! order by order fixes the off-diagonal part of each `A_j` through one
//! inverse Liouvillian; the diagonal part is a free gauge, zero by default.
//!
//! The position operator `Y` is never formed. It only enters through the
//! derivation `[A, Y] = -i dA/dk_y`, so `L_A(Y) = -dA/dk_y`.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fiber::{
    commutator_with_position, k_derivative, off_diagonal, sup_fiber_norm, unitary_exp, Axis, FiberOperator,
    ProjectionField, I,
};
use crate::liouvillian::{inverse_liouvillian_spectral, projection_derivative};

/// Highest order the command line accepts; beyond it the residuals of the
/// catalog models sit below roundoff at desk-scale grids.
pub const MAX_ORDER: usize = 4;

/// Ordered compositions of `j` into positive parts.
pub fn compositions(j: usize) -> Vec<Vec<usize>> {
    if j == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=j {
        for mut rest in compositions(j - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Compositions for every order up to `max`, computed once.
#[derive(Clone, Debug)]
pub struct CompositionTable {
    table: Vec<Vec<Vec<usize>>>,
}

impl CompositionTable {
    pub fn new(max: usize) -> Self {
        Self {
            table: (0..=max).map(compositions).collect(),
        }
    }

    pub fn get(&self, j: usize) -> Vec<Vec<usize>> {
        self.table.get(j).cloned().unwrap_or_else(|| compositions(j))
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|x| x as f64).product()
}

fn liouville(a: &FiberOperator, b: &FiberOperator) -> Result<FiberOperator> {
    Ok(a.commutator(b)?.scale(-I))
}

fn generator<'a>(gens: &'a [FiberOperator], index: usize) -> Result<&'a FiberOperator> {
    gens.get(index - 1).ok_or(Error::MissingGenerator {
        index,
        available: gens.len(),
    })
}

/// Applies `L_{A_{j_1}} .. L_{A_{j_{m-1}}}` (outermost first) to `inner`.
fn apply_chain(gens: &[FiberOperator], outer: &[usize], inner: FiberOperator) -> Result<FiberOperator> {
    let mut acc = inner;
    for &idx in outer.iter().rev() {
        acc = liouville(generator(gens, idx)?, &acc)?;
    }
    Ok(acc)
}

fn collect_terms<F>(
    gens: &[FiberOperator],
    j: usize,
    skip_single: bool,
    mut innermost: F,
    zero: FiberOperator,
) -> Result<FiberOperator>
where
    F: FnMut(usize) -> Result<FiberOperator>,
{
    let mut total = zero;
    for comp in compositions(j) {
        let m = comp.len();
        if skip_single && m == 1 {
            continue;
        }
        let (last, outer) = comp.split_last().expect("compositions of j >= 1 are non-empty");
        let term = apply_chain(gens, outer, innermost(*last)?)?;
        total = total.add(&term.scale(Complex64::new(1.0 / factorial(m), 0.0)))?;
    }
    Ok(total)
}

/// `B_j`, the coefficient of `eps^j` in `e^{-i eps S} B e^{i eps S}`.
pub fn expansion_coefficient(b: &FiberOperator, gens: &[FiberOperator], j: usize) -> Result<FiberOperator> {
    if j == 0 {
        return Ok(b.clone());
    }
    let zero = FiberOperator::zeros(b.grid().clone(), b.dim());
    collect_terms(gens, j, false, |idx| liouville(generator(gens, idx)?, b), zero)
}

/// `B_j` without the single-generator term `L_{A_j}(B)`; for `B = H0` this is
/// the known part `L_{j-1}` of `H_{0,j}`.
pub fn expansion_coefficient_known(b: &FiberOperator, gens: &[FiberOperator], j: usize) -> Result<FiberOperator> {
    let zero = FiberOperator::zeros(b.grid().clone(), b.dim());
    if j <= 1 {
        return Ok(zero);
    }
    collect_terms(gens, j, true, |idx| liouville(generator(gens, idx)?, b), zero)
}

/// `Y_j` for `j >= 1`: the same expansion applied to the position operator `Y`.
pub fn y_coefficient(gens: &[FiberOperator], j: usize) -> Result<FiberOperator> {
    if j == 0 {
        return Err(Error::NotPeriodic);
    }
    let first = generator(gens, 1)?;
    let zero = FiberOperator::zeros(first.grid().clone(), first.dim());
    let mut cache: HashMap<usize, FiberOperator> = HashMap::new();
    collect_terms(
        gens,
        j,
        false,
        |idx| {
            if let Some(d) = cache.get(&idx) {
                return Ok(d.clone());
            }
            // L_A(Y) = -i[A, Y] = -dA/dk_y
            let d = k_derivative(generator(gens, idx)?, Axis::Y).scale(Complex64::new(-1.0, 0.0));
            cache.insert(idx, d.clone());
            Ok(d)
        },
        zero,
    )
}

/// Fiber field of `[Y, P] = i dP/dk_y`.
pub fn y_commutator(p: &FiberOperator) -> FiberOperator {
    // [P, Y] = -i dP/dk_y is what commutator_with_position returns
    commutator_with_position(p, Axis::Y).scale(Complex64::new(-1.0, 0.0))
}

/// `Y^OD = [[Y, P0], P0]`.
pub fn y_od(pi0: &ProjectionField) -> FiberOperator {
    y_commutator(pi0.op())
        .commutator(pi0.op())
        .expect("same grid and dimension")
}

/// `Y^OD` with `dP0/dk_y` evaluated nodewise through
/// [`projection_derivative`]. Agrees with [`y_od`] up to the aliasing error of
/// the grid derivative of `P0`, and is exactly off-diagonal.
pub fn y_od_spectral(h: &FiberOperator, pi0: &ProjectionField) -> Result<FiberOperator> {
    Ok(y_commutator_spectral(h, pi0)?.commutator(pi0.op())?)
}

/// `[Y, P0] = i dP0/dk_y` through [`projection_derivative`].
pub fn y_commutator_spectral(h: &FiberOperator, pi0: &ProjectionField) -> Result<FiberOperator> {
    Ok(projection_derivative(h, pi0, Axis::Y)?.scale(I))
}

/// Optional block-diagonal part added to each generator.
pub trait DiagonalGauge: Sync {
    /// Diagonal part of `A_j`; must be Hermitian and commute with `P0`.
    fn diagonal_part(&self, j: usize, h: &FiberOperator, pi0: &ProjectionField) -> Option<FiberOperator>;
}

/// The default gauge `A_j^D = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct OffDiagonalGauge;

impl DiagonalGauge for OffDiagonalGauge {
    fn diagonal_part(&self, _: usize, _: &FiberOperator, _: &ProjectionField) -> Option<FiberOperator> {
        None
    }
}

/// `A_j^D = c * H0` for every `j`; `H0` commutes with `P0`, so the recursion
/// stays consistent.
#[derive(Clone, Copy, Debug)]
pub struct HamiltonianGauge(pub f64);

impl DiagonalGauge for HamiltonianGauge {
    fn diagonal_part(&self, _: usize, h: &FiberOperator, _: &ProjectionField) -> Option<FiberOperator> {
        Some(h.scale(Complex64::new(self.0, 0.0)))
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorSequence {
    generators: Vec<FiberOperator>,
}

impl GeneratorSequence {
    pub fn generators(&self) -> &[FiberOperator] {
        &self.generators
    }

    pub fn order(&self) -> usize {
        self.generators.len()
    }

    /// Prefix `A_1..A_n`.
    pub fn truncate(&self, n: usize) -> Self {
        Self {
            generators: self.generators[..n.min(self.order())].to_vec(),
        }
    }

    pub fn zeros(like: &FiberOperator, n: usize) -> Self {
        Self {
            generators: vec![FiberOperator::zeros(like.grid().clone(), like.dim()); n],
        }
    }
}

/// `A_1 .. A_n` in the off-diagonal gauge.
pub fn build_generators(h: &FiberOperator, pi0: &ProjectionField, n: usize) -> Result<GeneratorSequence> {
    build_generators_with_gauge(h, pi0, n, &OffDiagonalGauge)
}

pub fn build_generators_with_gauge(
    h: &FiberOperator,
    pi0: &ProjectionField,
    n: usize,
    gauge: &dyn DiagonalGauge,
) -> Result<GeneratorSequence> {
    let mut gens: Vec<FiberOperator> = Vec::with_capacity(n);
    for j in 1..=n {
        let known = expansion_coefficient_known(h, &gens, j)?;
        let y = if j == 1 {
            y_od_spectral(h, pi0)?
        } else {
            y_coefficient(&gens, j - 1)?
        };
        let d = off_diagonal(&known.sub(&y)?, pi0)?;
        let mut a = inverse_liouvillian_spectral(h, pi0, &d)?;
        if let Some(diag) = gauge.diagonal_part(j, h, pi0) {
            a = a.add(&diag)?;
        }
        gens.push(a);
    }
    Ok(GeneratorSequence { generators: gens })
}

/// `max_k ||[H_{0,j} - Y_{j-1}, P0]||`, which the construction drives to zero.
pub fn recursion_residual(h: &FiberOperator, pi0: &ProjectionField, gens: &[FiberOperator], j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::Validation("recursion starts at order 1".into()));
    }
    let h_j = expansion_coefficient(h, gens, j)?;
    let mut c = h_j.commutator(pi0.op())?;
    if j == 1 {
        c = c.sub(&y_commutator_spectral(h, pi0)?)?;
    } else {
        c = c.sub(&y_coefficient(gens, j - 1)?.commutator(pi0.op())?)?;
    }
    Ok(sup_fiber_norm(&c))
}

#[derive(Clone, Debug)]
pub struct NeassState {
    epsilon: f64,
    order: usize,
    s: FiberOperator,
    pi: ProjectionField,
    defect: f64,
}

impl NeassState {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `S_n^eps`.
    pub fn generator(&self) -> &FiberOperator {
        &self.s
    }

    /// `P_n^eps = e^{i eps S} P0 e^{-i eps S}`.
    pub fn projection(&self) -> &ProjectionField {
        &self.pi
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }
}

/// `S = sum_j eps^{j-1} A_j`.
pub fn series(gens: &GeneratorSequence, like: &FiberOperator, epsilon: f64) -> Result<FiberOperator> {
    let mut s = FiberOperator::zeros(like.grid().clone(), like.dim());
    for (j, a) in gens.generators().iter().enumerate() {
        s = s.add(&a.scale(Complex64::new(epsilon.powi(j as i32), 0.0)))?;
    }
    Ok(s)
}

pub fn assemble_neass(
    h: &FiberOperator,
    pi0: &ProjectionField,
    gens: &GeneratorSequence,
    epsilon: f64,
) -> Result<NeassState> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Validation(format!("epsilon {epsilon} outside (0, 1]")));
    }
    let s = series(gens, h, epsilon)?;
    let u = unitary_exp(&s, epsilon)?;
    let pi = pi0.conjugate(&u)?;
    let defect = stationarity_defect(h, &pi, epsilon)?;
    Ok(NeassState {
        epsilon,
        order: gens.order(),
        s,
        pi,
        defect,
    })
}

/// `max_k ||P^perp [H0 - eps Y, P] P||`, built from the periodic pieces
/// `[H0, P]` and `[Y, P] = i dP/dk_y`.
pub fn stationarity_defect(h: &FiberOperator, pi: &ProjectionField, epsilon: f64) -> Result<f64> {
    let c = h
        .commutator(pi.op())?
        .sub(&y_commutator(pi.op()).scale(Complex64::new(epsilon, 0.0)))?;
    let q = pi.complement();
    let sandwiched = q.mul(&c)?.mul(pi.op())?;
    Ok(sup_fiber_norm(&sandwiched))
}
