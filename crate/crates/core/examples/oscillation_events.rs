//! A molecule driven past its balance point: exit, stopping and return events,
//! and the energy identity along the path.

use diatomic_vp::field::ParticleState;
use diatomic_vp::hooke::HookeModel;
use diatomic_vp::trajectory::{
    detect_events, energy_residual, integrate, ConstantPm, Frozen, StepControl,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = HookeModel::tangent(1.0)?;
    let field = ConstantPm {
        f_plus: 0.3,
        f_minus: 1.5,
    };
    let start = ParticleState::new(0.0, 0.0, 0.7, 1.5, 0.0);
    let path = integrate(
        &start,
        &Frozen(&field),
        &m,
        0.0,
        1.0,
        &StepControl::with_dt(1e-3),
    )?;
    let balance = m.balance_points(2.0)?;
    println!(
        "chaotic region ({:.5}, {:.5})",
        balance.omega_min, balance.omega_max
    );
    for e in detect_events(&path, &balance, 1e-3) {
        println!(
            "t = {:.5}  {:<12} omega = {:.6} eta = {:+.6}",
            e.time,
            e.kind.label(),
            e.state[2],
            e.state[3]
        );
    }
    println!(
        "energy residual over [0, 1]: {:.3e}",
        energy_residual(&path, 0.0, 1.0, &m)?
    );
    println!("max |eta| = {:.6}", path.max_abs_eta());
    Ok(())
}
