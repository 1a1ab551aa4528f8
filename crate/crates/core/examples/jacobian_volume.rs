//! Phase-space volume: `det J` of the flow map in a smooth frozen field.

use diatomic_vp::field::ParticleState;
use diatomic_vp::hooke::HookeModel;
use diatomic_vp::trajectory::{jacobian_matrix, Frozen, SmoothField, StepControl};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = HookeModel::tangent(1.0)?;
    let field = SmoothField::new(vec![(-0.5, 0.6, 0.6), (0.7, 0.4, 0.4)]);
    let seeds = [
        ParticleState::new(0.0, 0.2, 0.5, 0.3, 0.0),
        ParticleState::new(-0.8, -0.4, 0.32, -0.4, 0.0),
        ParticleState::new(0.9, 0.1, 0.68, 0.5, 0.0),
    ];
    for dt in [1e-3, 1e-4] {
        for s in &seeds {
            let j = jacobian_matrix(
                s,
                &Frozen(&field),
                &m,
                0.0,
                1.0,
                1e-5,
                &StepControl::with_dt(dt),
            )?;
            println!(
                "dt = {dt:e}  seed {:?}  |det J - 1| = {:.3e}",
                s.coords(),
                (j.determinant() - 1.0).abs()
            );
        }
    }
    Ok(())
}
