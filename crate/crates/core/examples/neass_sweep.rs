//! Residual scaling of tau(J P_n^eps) - eps sigma_Hall for a chosen model.
//!
//! Usage: `cargo run --release --example neass_sweep -- [qwz U | haldane MASS] [GRID]`
use neass::models::{build_hamiltonian, fermi_projection, haldane, qwz};
use neass::response::{grid_of, log_range, residual_scaling_sweep};

fn main() -> neass::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let param = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let model = match args.first().map(String::as_str) {
        Some("haldane") => haldane(1.0, 0.1, std::f64::consts::FRAC_PI_2, param(1, 0.2)),
        _ => qwz(param(1, 1.0)),
    };
    let n = param(2, 48.0) as usize;
    let grid = grid_of(&model, n)?;
    let h = build_hamiltonian(&model, &grid)?;
    let (pi0, _) = fermi_projection(&h, model.mu())?;
    let eps = log_range(-2.0, -0.5, 8);
    let sweep = residual_scaling_sweep(&model, &h, &pi0, 3, &eps)?;
    println!("{} on {n}x{n}: sigma_Hall = {:.12}", model.name(), sweep.sigma_hall);
    for r in &sweep.records {
        println!(
            "n={} eps={:.4e} current={:+.6e} residual={:.3e} defect={:.3e}",
            r.n, r.epsilon, r.current, r.residual, r.defect
        );
    }
    for (n, fit) in &sweep.residual_fits {
        println!(
            "residual fit n={n}: slope {:.3} r2 {:.5} points {}",
            fit.slope, fit.r_squared, fit.points
        );
    }
    for (n, fit) in &sweep.defect_fits {
        println!("defect fit n={n}: slope {:.3} r2 {:.5}", fit.slope, fit.r_squared);
    }
    Ok(())
}
