//! Writing a generator field in the plain-text dump format and reading it back.
use neass::fiber::{read_dump, write_dump};
use neass::models::{build_hamiltonian, fermi_projection, qwz};
use neass::neass::build_generators;
use neass::response::grid_of;

fn main() -> neass::Result<()> {
    let model = qwz(1.0);
    let grid = grid_of(&model, 8)?;
    let h = build_hamiltonian(&model, &grid)?;
    let (pi0, _) = fermi_projection(&h, model.mu())?;
    let gens = build_generators(&h, &pi0, 1)?;
    let a1 = &gens.generators()[0];

    let mut buf = Vec::new();
    write_dump(a1, &mut buf)?;
    let text = String::from_utf8(buf).expect("dump is ASCII");
    for line in text.lines().take(6) {
        println!("{line}");
    }
    println!("... {} lines", text.lines().count());
    let back = read_dump(grid.clone(), 2, text.as_bytes())?;
    println!("round trip distance {:.1e}", back.sup_distance(a1)?);
    Ok(())
}
