//! The step field of a few molecules and the pair fields seen by their atoms.

use diatomic_vp::field::{Ensemble, FieldSnapshot, ParticleState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ens = Ensemble::new(
        vec![
            ParticleState::new(-1.0, 0.0, 0.4, 0.0, 0.25),
            ParticleState::new(0.0, 0.0, 0.5, 0.0, 0.5),
            ParticleState::new(1.5, 0.0, 0.6, 0.0, 0.25),
        ],
        0.0,
        1.0,
    )?;
    let snap = FieldSnapshot::build(&ens)?;
    let (sup_f, sup_pm) = snap.norms();
    println!("L1 = {}, sup|F| = {sup_f}, sup|F±| = {sup_pm}", ens.mass());
    for x in [-2.0, -1.0, -0.5, 0.0, 0.75, 1.5, 3.0] {
        let (fp, fm) = snap.field_pm(x, 0.5)?;
        println!(
            "x = {x:>5}: F = {:>6}, F+ = {fp:>6}, F- = {fm:>6}",
            snap.field_at(x)
        );
    }
    Ok(())
}
