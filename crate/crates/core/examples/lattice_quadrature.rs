//! Reciprocal basis and Brillouin-zone averages on an oblique lattice.
use num_complex::Complex64;

use neass::lattice::{bz_mean, BravaisLattice, KGrid};

fn main() -> neass::Result<()> {
    let lattice = BravaisLattice::triangular();
    let (b1, b2) = lattice.reciprocal_basis();
    println!(
        "a1 = {:?}, a2 = {:?}, cell area {:.6}",
        lattice.a1(),
        lattice.a2(),
        lattice.cell_area()
    );
    println!("b1 = {b1:?}, b2 = {b2:?}");
    // exp(2 cos(k.a1)) has mean I_0(2) = 2.2795853023360673
    for n in [4, 8, 12, 16, 24] {
        let grid = KGrid::new(lattice, n, n)?;
        let values: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new((2.0 * grid.phase(i, [1, 0]).cos()).exp(), 0.0))
            .collect();
        let mean = bz_mean(&values, &grid)?;
        println!(
            "n = {n:>2}: mean {:.16} error {:.1e}",
            mean.re,
            (mean.re - 2.2795853023360673).abs()
        );
    }
    Ok(())
}
