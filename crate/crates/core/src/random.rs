//! Seeded random smooth fields for the invariance suites.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fiber::{unitary_exp, CMatrix, FiberOperator};
use crate::lattice::KGrid;

pub use rand::SeedableRng;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rng: &mut SeededRng, dim: usize, amp: f64) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp))
    })
}

/// Random Hermitian field with Fourier modes `|R_i| <= range`, amplitudes
/// decaying like `e^{-|R|}`.
pub fn smooth_hermitian(rng: &mut SeededRng, grid: &Arc<KGrid>, dim: usize, range: i32) -> FiberOperator {
    let mut modes: Vec<([i32; 2], CMatrix)> = Vec::new();
    for r1 in -range..=range {
        for r2 in -range..=range {
            // one representative per +/- pair; the partner is the adjoint
            if (r1, r2) < (0, 0) {
                continue;
            }
            let amp = (-((r1.abs() + r2.abs()) as f64)).exp();
            let mut t = random_matrix(rng, dim, amp);
            if (r1, r2) == (0, 0) {
                t = (&t + t.adjoint()) * Complex64::new(0.5, 0.0);
            }
            modes.push(([r1, r2], t));
        }
    }
    let g = grid.clone();
    FiberOperator::from_fn(grid.clone(), dim, move |node| {
        let mut m = CMatrix::zeros(dim, dim);
        for (r, t) in &modes {
            let e = Complex64::from_polar(1.0, g.phase(node, *r));
            if *r == [0, 0] {
                m += t;
            } else {
                m += t * e + t.adjoint() * e.conj();
            }
        }
        m
    })
}

/// `exp(i t S)` for a random smooth Hermitian `S`.
pub fn smooth_unitary(rng: &mut SeededRng, grid: &Arc<KGrid>, dim: usize, t: f64) -> FiberOperator {
    let s = smooth_hermitian(rng, grid, dim, 2);
    unitary_exp(&s, t).expect("smooth_hermitian is Hermitian")
}
