//! A priori bounds of a bump datum and a certification of one characteristic.

use diatomic_vp::bounds::{certify, BoundCertificate};
use diatomic_vp::datum::InitialDatum;
use diatomic_vp::field::{FieldSnapshot, ParticleState};
use diatomic_vp::hooke::HookeModel;
use diatomic_vp::trajectory::{detect_events, integrate, Frozen, StepControl};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = HookeModel::tangent(1.0)?;
    let datum = InitialDatum::single_bump(
        [0.0, 0.0, 0.5, 0.0],
        [1.0, 0.5, 0.2, 0.5],
        10.0,
        [8, 8, 8, 8],
    );
    let ens = datum.sample()?;
    let cert = BoundCertificate::from_support(&m, &ens.support, ens.mass(), 1.0, 1.5)?;
    println!(
        "L1 = {:.6}, C = {:.6} (raised: {}), t0 = {:.6}",
        cert.mass, cert.c, cert.c_raised, cert.t0
    );
    println!(
        "balance ({:.6}, {:.6})",
        cert.balance.omega_min, cert.balance.omega_max
    );
    println!(
        "eta envelope {:.6}, omega confined to [{:.3e}, {:.9}]",
        cert.h_envelope, cert.omega_confinement.0, cert.omega_confinement.1
    );

    let snap = FieldSnapshot::build(&ens)?;
    let seed = ParticleState::new(
        ens.support.x_hi,
        ens.support.v_lo,
        ens.support.omega_lo,
        ens.support.eta_hi,
        0.0,
    );
    let mut path = integrate(
        &seed,
        &Frozen(&snap),
        &m,
        0.0,
        1.0,
        &StepControl::with_dt(2.5e-3),
    )?;
    path.events = detect_events(&path, &cert.balance, 1e-3);
    let report = certify(&path, &cert, &path.events, &m);
    for c in &report.checks {
        println!(
            "{:<18} checked {:>4}  violations {}  min margin {:?}",
            format!("{:?}", c.kind),
            c.checked,
            c.violations,
            c.min_margin
        );
    }
    println!("certified: {}", report.passed);
    Ok(())
}
