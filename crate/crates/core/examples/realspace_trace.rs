//! Trace per unit volume of the Fermi projection: Brillouin-zone formula
//! against dense diagonalization on a finite torus.
use neass::fiber::trace_per_unit_volume;
use neass::models::{build_hamiltonian, fermi_projection, qwz};
use neass::response::{grid_of, tuv_realspace_oracle};

fn main() -> neass::Result<()> {
    for u in [1.0, 3.0, -1.5] {
        let model = qwz(u);
        let grid = grid_of(&model, 48)?;
        let h = build_hamiltonian(&model, &grid)?;
        let (pi0, _) = fermi_projection(&h, model.mu())?;
        let bz = trace_per_unit_volume(pi0.op()).re;
        for l in [5, 9] {
            let rs = tuv_realspace_oracle(&model, l)?;
            println!(
                "qwz u={u:>4}: L={l} torus {:.12} single cell {:.12} BZ {bz:.12} ({} occupied states)",
                rs.torus_average, rs.single_cell, rs.occupied
            );
        }
    }
    Ok(())
}
