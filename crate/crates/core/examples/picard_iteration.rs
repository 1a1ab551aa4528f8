//! Picard iterates of a smooth bump on half the confinement time and their contraction fit.

use diatomic_vp::bounds::BoundCertificate;
use diatomic_vp::datum::InitialDatum;
use diatomic_vp::hooke::HookeModel;
use diatomic_vp::picard::{fit_contraction, iterate, PicardSettings};
use diatomic_vp::trajectory::StepControl;

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
    let horizon = 0.5 * cert.t0;
    let settings = PicardSettings {
        horizon,
        dt_macro: horizon / 8.0,
        control: StepControl::with_dt(horizon / 32.0),
        n_max: 6,
        probes: 1024,
        ..PicardSettings::default()
    };
    let records = iterate(&datum, &m, &settings)?;
    for r in &records {
        println!(
            "n = {}  sup_delta = {:.3e}  sup|F| = {:.4}",
            r.n, r.sup_delta, r.field_norms.0
        );
    }
    if let Some(fit) = fit_contraction(&records, horizon, 6) {
        println!("K = {:.4e}, envelope holds: {}", fit.k, fit.envelope_holds);
    }
    Ok(())
}
