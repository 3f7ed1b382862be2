//! Chern marker invariance under smooth unitary conjugation, including the
//! unitary that produces the NEASS.
use std::f64::consts::FRAC_PI_2;

use neass::fiber::unitary_exp;
use neass::models::{build_hamiltonian, fermi_projection, haldane};
use neass::neass::{assemble_neass, build_generators};
use neass::random::{rng, smooth_unitary};
use neass::response::{chern_marker, chern_simons_check, grid_of};

fn main() -> neass::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let model = haldane(1.0, 0.1, FRAC_PI_2, 0.0);
    let grid = grid_of(&model, 48)?;
    let h = build_hamiltonian(&model, &grid)?;
    let (pi0, _) = fermi_projection(&h, model.mu())?;
    println!("seed {seed}, marker of P0 = {:.12}", chern_marker(&pi0).re);
    let mut r = rng(seed);
    for i in 0..10 {
        let u = smooth_unitary(&mut r, &grid, model.dim(), 0.7);
        println!(
            "random U #{i}: |marker(U P U*) - marker(P)| = {:.2e}",
            chern_simons_check(&pi0, &u)?
        );
    }
    let gens = build_generators(&h, &pi0, 3)?;
    for eps in [0.01, 0.05, 0.2] {
        let state = assemble_neass(&h, &pi0, &gens, eps)?;
        let u = unitary_exp(state.generator(), eps)?;
        println!("NEASS eps = {eps}: difference {:.2e}", chern_simons_check(&pi0, &u)?);
    }
    Ok(())
}
