//! Hall conductivity of the catalog models against the plaquette Chern number.
use std::f64::consts::FRAC_PI_2;

use neass::models::{build_hamiltonian, fermi_projection, haldane, qwz, HoppingModel};
use neass::response::{chern_number_fhs, grid_of, hall_conductivity};

fn main() -> neass::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(48);
    let models: Vec<(String, HoppingModel)> = vec![
        ("qwz u=-1".into(), qwz(-1.0)),
        ("qwz u=1".into(), qwz(1.0)),
        ("qwz u=3".into(), qwz(3.0)),
        ("haldane phi=+pi/2".into(), haldane(1.0, 0.1, FRAC_PI_2, 0.0)),
        ("haldane phi=-pi/2".into(), haldane(1.0, 0.1, -FRAC_PI_2, 0.0)),
        ("haldane M=0.8 (trivial)".into(), haldane(1.0, 0.1, FRAC_PI_2, 0.8)),
    ];
    println!(
        "{:<26} {:>10} {:>20} {:>5} {:>10}",
        "model", "gap", "2 pi sigma_Hall", "C", "|diff|"
    );
    for (label, model) in models {
        let grid = grid_of(&model, n)?;
        let h = build_hamiltonian(&model, &grid)?;
        let (pi0, gap) = fermi_projection(&h, model.mu())?;
        let two_pi_sigma = 2.0 * std::f64::consts::PI * hall_conductivity(&pi0);
        let c = chern_number_fhs(&pi0)?;
        println!(
            "{label:<26} {:>10.4} {two_pi_sigma:>20.12} {c:>5} {:>10.2e}",
            gap.gap_width,
            (two_pi_sigma - c as f64).abs()
        );
    }
    Ok(())
}
