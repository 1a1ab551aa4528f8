//! Self-consistent evolution of a bump with continuation monitoring.

use diatomic_vp::datum::InitialDatum;
use diatomic_vp::hooke::HookeModel;
use diatomic_vp::simulator::{run, SimSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = HookeModel::tangent(1.0)?;
    let datum = InitialDatum::single_bump(
        [0.0, 0.0, 0.5, 0.0],
        [1.0, 0.5, 0.2, 0.5],
        20.0,
        [8, 8, 8, 8],
    );
    let settings = SimSettings {
        horizon: 1.0,
        tracked_seeds: 8,
        ..SimSettings::default()
    };
    let out = run(&datum, &m, &settings)?;
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>10} {:>6}",
        "t", "E_kin", "E_osc", "omega_lo", "eta_hi", "detJ_err", "status"
    );
    for d in out.diagnostics.iter().step_by(10) {
        println!(
            "{:>6.2} {:>12.6e} {:>12.6e} {:>12.6} {:>12.6} {:>10.2e} {:>6}",
            d.time,
            d.e_kin,
            d.e_osc,
            d.support.omega_lo,
            d.support.eta_hi,
            d.detj_err,
            d.status.label()
        );
    }
    let events = out.diagnostics.last().map(|d| d.events).unwrap_or_default();
    println!(
        "seed events: {} exits, {} stoppings, {} returns",
        events.exits, events.stoppings, events.returns
    );
    println!("seed certificates pass: {}", out.seeds_certified());
    Ok(())
}
