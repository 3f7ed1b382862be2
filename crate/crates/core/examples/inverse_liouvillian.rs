//! Spectral and contour inverse Liouvillian on the QWZ model.
use neass::fiber::{sup_fiber_norm, FiberOperator};
use neass::liouvillian::{defining_residual, inverse_liouvillian_contour, inverse_liouvillian_spectral, ContourSpec};
use neass::models::{build_hamiltonian, fermi_projection, qwz};
use neass::neass::y_od_spectral;
use neass::response::grid_of;

fn main() -> neass::Result<()> {
    let model = qwz(1.0);
    let grid = grid_of(&model, 48)?;
    let h = build_hamiltonian(&model, &grid)?;
    let (pi0, gap) = fermi_projection(&h, model.mu())?;
    let a: FiberOperator = y_od_spectral(&h, &pi0)?;
    let b = inverse_liouvillian_spectral(&h, &pi0, &a)?;
    println!("|A| = {:.4}, |B| = {:.4}", sup_fiber_norm(&a), sup_fiber_norm(&b));
    println!(
        "spectral residual |-i[H,B] - A| = {:.2e}",
        defining_residual(&h, &b, &a)?
    );
    for nodes in [8, 16, 32, 64, 128] {
        let contour = ContourSpec::around_occupied(&gap, nodes);
        let bc = inverse_liouvillian_contour(&h, &pi0, &a, &contour)?;
        println!(
            "contour M = {nodes:>3}: |B_contour - B_spectral| = {:.2e}",
            bc.sup_distance(&b)?
        );
    }
    Ok(())
}
