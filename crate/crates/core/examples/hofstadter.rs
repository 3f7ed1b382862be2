//! Chern numbers of the gaps of the Hofstadter model at flux p/q.
//!
//! Usage: `cargo run --release --example hofstadter -- [P] [Q] [GRID]`
use neass::models::{build_hamiltonian, fermi_projection, hofstadter};
use neass::response::{chern_number_fhs, grid_of, hall_conductivity};

fn main() -> neass::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (p, q) = (args.first().copied().unwrap_or(1), args.get(1).copied().unwrap_or(5));
    let n = args.get(2).copied().unwrap_or(48);
    let base = hofstadter(p as i64, q, 1.0)?;
    let grid = grid_of(&base, n)?;
    println!("flux {p}/{q} on a {n}x{n} magnetic Brillouin zone");
    for filled in 1..q {
        let model = base.clone().place_mu_in_gap(&grid, filled)?;
        let h = build_hamiltonian(&model, &grid)?;
        let (pi0, gap) = fermi_projection(&h, model.mu())?;
        let c = chern_number_fhs(&pi0)?;
        let sigma = hall_conductivity(&pi0);
        println!(
            "{filled} band(s) filled: mu = {:+.4} gap {:.4} 2 pi sigma = {:+.8} C = {c:+}",
            model.mu(),
            gap.gap_width,
            2.0 * std::f64::consts::PI * sigma
        );
    }
    Ok(())
}
