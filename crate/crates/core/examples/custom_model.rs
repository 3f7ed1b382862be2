//! Loading a model from a hopping list. Only one bond of each Hermitian pair
//! needs to be given.
use std::io::Cursor;

use neass::lattice::BravaisLattice;
use neass::models::{build_hamiltonian, fermi_projection, load_hopping_list};
use neass::response::{chern_number_fhs, grid_of, hall_conductivity};

// QWZ at u = 1 written out by hand: T_a1 = (sz - i sx)/2, T_a2 = (sz - i sy)/2.
const QWZ_U1: &str = "\
# R1 R2 row col re im
0 0 0 0  1.0  0.0
0 0 1 1 -1.0  0.0
1 0 0 0  0.5  0.0
1 0 1 1 -0.5  0.0
1 0 0 1  0.0 -0.5
1 0 1 0  0.0 -0.5
0 1 0 0  0.5  0.0
0 1 1 1 -0.5  0.0
0 1 0 1 -0.5  0.0
0 1 1 0  0.5  0.0
";

fn main() -> neass::Result<()> {
    let model = load_hopping_list("qwz-from-file", Cursor::new(QWZ_U1), BravaisLattice::square(), 0.0)?;
    println!(
        "{}: {} orbitals, {} hopping vectors",
        model.name(),
        model.dim(),
        model.hoppings().len()
    );
    let grid = grid_of(&model, 48)?;
    let h = build_hamiltonian(&model, &grid)?;
    let (pi0, _) = fermi_projection(&h, model.mu())?;
    println!(
        "2 pi sigma_Hall = {:.12}, plaquette Chern number = {}",
        2.0 * std::f64::consts::PI * hall_conductivity(&pi0),
        chern_number_fhs(&pi0)?
    );
    Ok(())
}
