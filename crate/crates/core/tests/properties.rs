//! Cross-module invariants as property tests.

use proptest::prelude::*;

use diatomic_vp::bounds::BoundCertificate;
use diatomic_vp::datum::{read_particles, InitialDatum};
use diatomic_vp::field::{Ensemble, FieldSnapshot, ParticleState, SupportBox};
use diatomic_vp::hooke::HookeModel;
use diatomic_vp::io::write_ensemble;
use diatomic_vp::simulator::{run, SimSettings};
use diatomic_vp::trajectory::{flow, integrate, Frozen, PairField, SmoothField, StepControl};

fn particle() -> impl Strategy<Value = ParticleState> {
    (
        -3.0..3.0f64,
        -1.0..1.0f64,
        0.05..0.95f64,
        -1.0..1.0f64,
        0.0..2.0f64,
    )
        .prop_map(|(x, v, w, e, m)| ParticleState::new(x, v, w, e, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pair_field_is_bounded_by_twice_the_mass(ps in prop::collection::vec(particle(), 1..40), x in -5.0..5.0f64, w in 0.01..0.99f64) {
        let e = Ensemble::new(ps, 0.0, 1.0).unwrap();
        let s = FieldSnapshot::build(&e).unwrap();
        let (fp, fm) = s.pm(x, w);
        let bound = 2.0 * e.mass() * (1.0 + 1e-12);
        prop_assert!(fp.abs() <= bound && fm.abs() <= bound);
        prop_assert!(s.sup_pm() <= bound);
    }

    #[test]
    fn backward_flow_inverts_forward_flow(z in particle(), t in 0.05..0.6f64) {
        let m = HookeModel::tangent(1.0).unwrap();
        let f = SmoothField::new(vec![(-0.5, 0.6, 0.6), (0.7, 0.4, 0.4)]);
        let c = StepControl::with_dt(1e-3);
        let fwd = flow(&z, &Frozen(&f), &m, 0.0, t, &c).unwrap();
        let back = flow(&fwd, &Frozen(&f), &m, t, 0.0, &c).unwrap();
        for (a, b) in back.coords().iter().zip(z.coords()) {
            // substep counts follow the start state of each step, so inversion is exact only to O(dt²)
            prop_assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", back, z);
        }
    }

    #[test]
    fn characteristics_stay_between_the_walls(z in particle(), fm in -3.0..3.0f64) {
        let m = HookeModel::tangent(1.0).unwrap();
        let f = diatomic_vp::trajectory::ConstantPm { f_plus: 0.0, f_minus: fm };
        let p = integrate(&z, &Frozen(&f), &m, 0.0, 1.0, &StepControl::with_dt(2e-3)).unwrap();
        prop_assert!(p.states.iter().all(|s| m.in_domain(s[2])));
    }

    #[test]
    fn certified_box_contains_the_initial_box(lo in 0.05..0.45f64, width in 0.01..0.45f64, mass in 0.0..3.0f64, t in 0.0..2.0f64) {
        let m = HookeModel::tangent(1.0).unwrap();
        let b = SupportBox::from_bounds([-1.0, -0.5, lo, -0.5], [1.0, 0.5, (lo + width).min(0.95), 0.5]);
        let c = BoundCertificate::from_support(&m, &b, mass, t, 1.5).unwrap();
        prop_assert!(c.certified_box.contains_box(&b));
        prop_assert!(c.c >= 1.5 * 2.0 * mass);
        prop_assert!(c.balance.contains_open(b.omega_lo) && c.balance.contains_open(b.omega_hi));
    }

    #[test]
    fn ensemble_csv_roundtrip_is_exact(ps in prop::collection::vec(particle(), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("e.csv");
        let e = Ensemble::new(ps.clone(), 0.0, 1.0).unwrap();
        write_ensemble(&file, &e).unwrap();
        prop_assert_eq!(read_particles(&file).unwrap(), ps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn self_consistent_mass_is_bitwise_constant(amp in 0.0..30.0f64, cx in -1.0..1.0f64, cw in 0.35..0.65f64) {
        let m = HookeModel::tangent(1.0).unwrap();
        let d = InitialDatum::single_bump([cx, 0.0, cw, 0.0], [0.5, 0.4, 0.1, 0.4], amp, [4, 4, 4, 4]);
        let s = SimSettings { horizon: 0.1, dt_macro: 0.02, tracked_seeds: 2, ..SimSettings::default() };
        let out = run(&d, &m, &s).unwrap();
        let l1 = out.diagnostics[0].l1;
        prop_assert!(out.diagnostics.iter().all(|d| d.l1 == l1));
        prop_assert!(!out.any_fail());
    }
}
