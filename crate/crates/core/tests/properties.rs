//! Randomized algebraic identities over small grids. Each case draws a seed
//! and builds smooth fields from it, so a shrunk failure names a replayable
//! seed.

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use neass::fiber::{
    commutator_with_position, off_diagonal, off_diagonal_residual, sup_fiber_norm, trace_per_unit_volume,
    unitarity_defect, unitary_exp, Axis, CMatrix, FiberOperator,
};
use neass::lattice::{bz_mean, BravaisLattice, KGrid};
use neass::liouvillian::{defining_residual, inverse_liouvillian_spectral};
use neass::models::{build_hamiltonian, fermi_projection, qwz};
use neass::neass::compositions;
use neass::random::{rng, smooth_hermitian};

fn grid(n: usize) -> Arc<KGrid> {
    Arc::new(KGrid::new(BravaisLattice::square(), n, n).unwrap())
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn off_diagonal_is_idempotent(seed in any::<u64>(), u in prop_oneof![-2.5..-0.5f64, 0.5..2.5f64]) {
        let model = qwz(u);
        let g = grid(12);
        let h = build_hamiltonian(&model, &g).unwrap();
        let (pi0, _) = fermi_projection(&h, model.mu()).unwrap();
        let a = smooth_hermitian(&mut rng(seed), &g, 2, 1);
        let once = off_diagonal(&a, &pi0).unwrap();
        let twice = off_diagonal(&once, &pi0).unwrap();
        prop_assert!(once.sup_distance(&twice).unwrap() < 1e-13);
        prop_assert!(off_diagonal_residual(&once, &pi0).unwrap() < 1e-13);
    }

    #[test]
    fn inverse_liouvillian_is_linear(seed in any::<u64>(), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let model = qwz(1.0);
        let g = grid(12);
        let h = build_hamiltonian(&model, &g).unwrap();
        let (pi0, _) = fermi_projection(&h, model.mu()).unwrap();
        let mut r = rng(seed);
        let a = off_diagonal(&smooth_hermitian(&mut r, &g, 2, 1), &pi0).unwrap();
        let b = off_diagonal(&smooth_hermitian(&mut r, &g, 2, 1), &pi0).unwrap();
        let combo = a.scale(c(alpha)).add(&b.scale(c(beta))).unwrap();
        let la = inverse_liouvillian_spectral(&h, &pi0, &a).unwrap();
        let lb = inverse_liouvillian_spectral(&h, &pi0, &b).unwrap();
        let lc = inverse_liouvillian_spectral(&h, &pi0, &combo).unwrap();
        let expected = la.scale(c(alpha)).add(&lb.scale(c(beta))).unwrap();
        prop_assert!(lc.sup_distance(&expected).unwrap() < 1e-11);
        prop_assert!(defining_residual(&h, &lc, &combo).unwrap() < 1e-11);
    }

    #[test]
    fn trace_is_cyclic(seed in any::<u64>(), dim in 1usize..4) {
        let g = grid(10);
        let mut r = rng(seed);
        let a = smooth_hermitian(&mut r, &g, dim, 2);
        let b = smooth_hermitian(&mut r, &g, dim, 2);
        let ab = trace_per_unit_volume(&a.mul(&b).unwrap());
        let ba = trace_per_unit_volume(&b.mul(&a).unwrap());
        prop_assert!((ab - ba).norm() < 1e-12);
    }

    #[test]
    fn dagger_is_an_involution(seed in any::<u64>(), dim in 1usize..4) {
        let g = grid(6);
        let mut r = rng(seed);
        let a = smooth_hermitian(&mut r, &g, dim, 1);
        let b = smooth_hermitian(&mut r, &g, dim, 1);
        let m = a.mul(&b).unwrap().scale(Complex64::new(0.3, -1.1));
        let back = m.dagger().dagger();
        prop_assert_eq!(back.nodes(), m.nodes());
        let lhs = m.dagger();
        let rhs = b.dagger().mul(&a.dagger()).unwrap().scale(Complex64::new(0.3, 1.1));
        prop_assert!(lhs.sup_distance(&rhs).unwrap() < 1e-13);
    }

    #[test]
    fn position_commutators_are_traceless(seed in any::<u64>(), n in 6usize..16) {
        let g = grid(n);
        let a = smooth_hermitian(&mut rng(seed), &g, 2, 2);
        for axis in [Axis::X, Axis::Y] {
            let tr = trace_per_unit_volume(&commutator_with_position(&a, axis));
            prop_assert!(tr.norm() < 1e-12);
        }
    }

    #[test]
    fn mean_of_a_constant_is_the_constant(re in -5.0..5.0f64, im in -5.0..5.0f64, n1 in 1usize..9, n2 in 1usize..9) {
        let g = KGrid::new(BravaisLattice::triangular(), n1, n2).unwrap();
        let z = Complex64::new(re, im);
        let mean = bz_mean(&vec![z; g.len()], &g).unwrap();
        prop_assert!((mean - z).norm() < 1e-13);
        let m = CMatrix::identity(2, 2) * z;
        let area = g.lattice().cell_area();
        let tr = trace_per_unit_volume(&FiberOperator::constant(Arc::new(g), &m));
        prop_assert!((tr - z * 2.0 / area).norm() < 1e-12);
    }

    #[test]
    fn exponential_of_hermitian_is_unitary(seed in any::<u64>(), t in -4.0..4.0f64, dim in 1usize..4) {
        let g = grid(6);
        let s = smooth_hermitian(&mut rng(seed), &g, dim, 2);
        let u = unitary_exp(&s, t).unwrap();
        prop_assert!(unitarity_defect(&u) < 1e-12);
        let back = u.mul(&unitary_exp(&s, -t).unwrap()).unwrap();
        prop_assert!(back.sup_distance(&FiberOperator::identity(g, dim)).unwrap() < 1e-12);
        prop_assert!(sup_fiber_norm(&u) < 1.0 + 1e-12);
    }
}

#[test]
fn composition_counts_double() {
    for j in 1..=8 {
        let all = compositions(j);
        assert_eq!(all.len(), 1 << (j - 1));
        assert!(all
            .iter()
            .all(|p| p.iter().sum::<usize>() == j && p.iter().all(|&x| x > 0)));
    }
    assert_eq!(compositions(0), vec![Vec::<usize>::new()]);
}
