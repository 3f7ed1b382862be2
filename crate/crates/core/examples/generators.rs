//! Builds the generator sequence for QWZ and prints per-order diagnostics.
use std::sync::Arc;

use neass::fiber::{off_diagonal_residual, sup_fiber_norm};
use neass::lattice::KGrid;
use neass::models::{build_hamiltonian, fermi_projection, qwz};
use neass::neass::{build_generators, recursion_residual};

fn main() -> neass::Result<()> {
    let u: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    for n in [32, 48, 64] {
        let model = qwz(u);
        let grid = Arc::new(KGrid::new(model.lattice().clone(), n, n)?);
        let h = build_hamiltonian(&model, &grid)?;
        let (pi0, _) = fermi_projection(&h, model.mu())?;
        let gens = build_generators(&h, &pi0, 3)?;
        println!("grid {n}x{n}");
        for (j, a) in gens.generators().iter().enumerate() {
            println!(
                "  A_{}  norm {:.3e}  od-residual {:.1e}  recursion {:.1e}",
                j + 1,
                sup_fiber_norm(a),
                off_diagonal_residual(a, &pi0)?,
                recursion_residual(&h, &pi0, gens.generators(), j + 1)?
            );
        }
    }
    Ok(())
}
