//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line with the
//! measured value next to its tolerance.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diatomic_vp::bounds::{CheckKind, DEFAULT_SAFETY};
use diatomic_vp::cli::{dispatch, EXIT_OK, EXIT_VIOLATION};
use diatomic_vp::datum::{halton_point, Bump, InitialDatum};
use diatomic_vp::field::{Ensemble, FieldSnapshot, ParticleState, SupportBox};
use diatomic_vp::hooke::{Branch, HookeModel};
use diatomic_vp::picard::{fit_contraction, iterate, PicardSettings};
use diatomic_vp::simulator::{
    check_continuation, run, ContinuationStatus, Coordinate, SimSettings,
};
use diatomic_vp::trajectory::{
    energy_residual, integrate, jacobian_estimate, Frozen, PairField, SmoothField, StepControl,
    ZeroField,
};

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "[criterion {criterion}] {verdict} {name}: {detail}"
    );
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

#[test]
fn criterion_1_hooke_oracles() {
    let start = Instant::now();
    let m = HookeModel::tangent(1.0).unwrap();
    let pi = std::f64::consts::PI;
    let mut worst: f64 = 0.0;
    worst = worst.max(rel(m.force(0.25).unwrap(), 1.0));
    worst = worst.max(rel(
        m.potential(0.75).unwrap(),
        std::f64::consts::LN_2 / (2.0 * pi),
    ));
    let b = m.balance_points(1.0).unwrap();
    worst = worst
        .max(rel(b.omega_min, 0.25))
        .max(rel(b.omega_max, 0.75));
    for u in [1e-6, 1e-3, 0.05, 0.5, 2.0, 5.0] {
        for branch in [Branch::Left, Branch::Right] {
            let w = m.inverse_potential(u, branch).unwrap();
            worst = worst.max(rel(m.potential(w).unwrap(), u));
        }
    }
    for k in 1..100 {
        let w = k as f64 / 100.0;
        if k == 50 {
            continue;
        }
        let branch = if w < 0.5 { Branch::Left } else { Branch::Right };
        worst = worst.max(rel(
            m.inverse_potential(m.potential(w).unwrap(), branch)
                .unwrap(),
            w,
        ));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && within(elapsed, 1.0);
    report(
        1,
        "Hooke oracle suite",
        pass,
        &format!("max relative error {worst:.3e} (tol 1e-10), runtime {elapsed:.2?} (limit 1 s)"),
    );
    assert!(pass);
}

fn brute_field(ps: &[ParticleState], x: f64) -> f64 {
    let right: f64 = ps.iter().filter(|q| q.x > x).map(|q| 2.0 * q.w).sum();
    let left: f64 = ps.iter().filter(|q| q.x < x).map(|q| 2.0 * q.w).sum();
    0.5 * (right - left)
}

#[test]
fn criterion_2_field_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    let mut bound_violations = 0usize;
    let mut far_field_equal = 0usize;
    let ensembles = 1000;
    for _ in 0..ensembles {
        let n = rng.random_range(1..=64);
        // dyadic weights keep every partial sum exact
        let ps: Vec<ParticleState> = (0..n)
            .map(|_| {
                ParticleState::new(
                    rng.random_range(-2.0..2.0),
                    0.0,
                    0.5,
                    0.0,
                    rng.random_range(1..=64) as f64 / 64.0,
                )
            })
            .collect();
        let ens = Ensemble::new(ps.clone(), 0.0, 1.0).unwrap();
        let snap = FieldSnapshot::build(&ens).unwrap();
        let l1 = ens.mass();
        for q in 0..1000 {
            let omega = rng.random_range(0.01..0.99);
            let x = match q % 4 {
                0 => ps[rng.random_range(0..n)].x,
                1 => ps[rng.random_range(0..n)].x - omega,
                _ => rng.random_range(-3.0..3.0),
            };
            if snap.field_at(x) != brute_field(&ps, x) {
                mismatches += 1;
            }
            let (fp, fm) = snap.pm(x, omega);
            let (bp, bm) = (
                brute_field(&ps, x + omega) + brute_field(&ps, x - omega),
                brute_field(&ps, x + omega) - brute_field(&ps, x - omega),
            );
            if fp != bp || fm != bm {
                mismatches += 1;
            }
            if fp.abs() > 2.0 * l1 || fm.abs() > 2.0 * l1 {
                bound_violations += 1;
            }
        }
        let (far, _) = snap.pm(1e6, 0.5);
        if far.abs() == 2.0 * l1 {
            far_field_equal += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0
        && bound_violations == 0
        && far_field_equal == ensembles
        && within(elapsed, 10.0);
    report(
        2,
        "field equivalence",
        pass,
        &format!(
            "{mismatches} mismatches over 1e3 x 1e3 queries, {bound_violations} bound violations, \
             far-field equality in {far_field_equal}/{ensembles}, runtime {elapsed:.2?} (limit 10 s)"
        ),
    );
    assert!(pass);
}

fn smooth_field() -> SmoothField {
    SmoothField::new(vec![(-0.5, 0.6, 0.6), (0.7, 0.4, 0.4)])
}

fn unit_box() -> SupportBox {
    SupportBox::from_bounds([-1.0, -0.5, 0.3, -0.5], [1.0, 0.5, 0.7, 0.5])
}

#[test]
fn criterion_3_volume_preservation() {
    let start = Instant::now();
    let model = HookeModel::tangent(1.0).unwrap();
    let field = smooth_field();
    let seeds: Vec<ParticleState> = (0..64)
        .map(|i| {
            let z = halton_point(i, &unit_box());
            ParticleState::new(z[0], z[1], z[2], z[3], 0.0)
        })
        .collect();
    let worst_at = |dt: f64| {
        let control = StepControl::with_dt(dt);
        seeds
            .iter()
            .map(|s| {
                (jacobian_estimate(s, &Frozen(&field), &model, 0.0, 1.0, 1e-5, &control).unwrap()
                    - 1.0)
                    .abs()
            })
            .fold(0.0_f64, f64::max)
    };
    let e1 = worst_at(2e-4);
    let e2 = worst_at(1e-4);
    let slope = (e1 / e2).log2();
    let elapsed = start.elapsed();
    let bound_ok = e2 <= 1e-4;
    let slope_ok = (slope - 2.0).abs() <= 0.1;
    let pass = bound_ok && slope_ok && within(elapsed, 60.0);
    report(
        3,
        "volume preservation",
        pass,
        &format!(
            "max |det J - 1| = {e2:.3e} at dt=1e-4 (tol 1e-4), {e1:.3e} at dt=2e-4, \
             halving slope {slope:.3} (target 2.0 +/- 0.1), runtime {elapsed:.2?} (limit 60 s)"
        ),
    );
    assert!(bound_ok, "|det J - 1| = {e2}");
    assert!(slope_ok, "dt-halving slope {slope}");
}

#[test]
fn criterion_4_energy_identity() {
    let start = Instant::now();
    let model = HookeModel::tangent(1.0).unwrap();
    let smooth = smooth_field();
    let fields: [&dyn PairField; 2] = [&ZeroField, &smooth];
    let seeds: Vec<ParticleState> = (0..16)
        .map(|i| {
            let z = halton_point(i, &unit_box());
            ParticleState::new(z[0], z[1], z[2], z[3], 0.0)
        })
        .collect();
    // signed residual of each (field, seed, segment) at one dt
    let residuals = |dt: f64| -> Vec<f64> {
        let control = StepControl::with_dt(dt);
        let mut out = Vec::new();
        for f in fields {
            for s in &seeds {
                let path = integrate(s, &Frozen(f), &model, 0.0, 1.0, &control).unwrap();
                for k in 0..10 {
                    let (a, b) = (0.1 * k as f64, 0.1 * (k + 1) as f64);
                    out.push(energy_residual(&path, a, b, &model).unwrap());
                }
            }
        }
        out
    };
    let r1 = residuals(4e-4);
    let r2 = residuals(2e-4);
    let r3 = residuals(1e-4);
    let max3 = r3.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let d12: f64 = r1.iter().zip(&r2).map(|(a, b)| (a - b).abs()).sum();
    let d23: f64 = r2.iter().zip(&r3).map(|(a, b)| (a - b).abs()).sum();
    let order = (d12 / d23).log2();
    let elapsed = start.elapsed();
    let pass = max3 <= 1e-6 && (order - 2.0).abs() <= 0.1 && within(elapsed, 30.0);
    report(
        4,
        "energy identity",
        pass,
        &format!(
            "max segment residual {max3:.3e} at dt=1e-4 over {} segments (tol 1e-6), \
             Richardson order {order:.3} (target 2.0 +/- 0.1), runtime {elapsed:.2?} (limit 30 s)",
            r3.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_lp_conservation() {
    let start = Instant::now();
    let model = HookeModel::tangent(1.0).unwrap();
    let datum = InitialDatum::single_bump(
        [0.0, 0.0, 0.5, 0.0],
        [1.0, 0.5, 0.2, 0.5],
        5.0,
        [18, 18, 18, 18],
    );
    let settings = SimSettings {
        horizon: 2.0,
        dt_macro: 0.02,
        seed_control: StepControl::with_dt(5e-3),
        tracked_seeds: 16,
        ..SimSettings::default()
    };
    let out = run(&datum, &model, &settings).unwrap();
    let d0 = &out.diagnostics[0];
    let l1_drift = out.diagnostics.iter().filter(|d| d.l1 != d0.l1).count();
    let linf_drift = out.diagnostics.iter().filter(|d| d.linf != d0.linf).count();
    let elapsed = start.elapsed();
    let n = out.ensemble.len();
    let pass = n >= 100_000
        && l1_drift == 0
        && linf_drift == 0
        && !out.any_fail()
        && within(elapsed, 120.0);
    report(
        5,
        "Lp conservation",
        pass,
        &format!(
            "{n} particles, {} diagnostics to T=2, L1 changed {l1_drift} times, Linf changed {linf_drift} times, \
             runtime {elapsed:.2?} (limit 120 s)",
            out.diagnostics.len()
        ),
    );
    assert!(pass);
}

fn random_datum(rng: &mut ChaCha8Rng) -> InitialDatum {
    let bumps = (0..rng.random_range(1..=2))
        .map(|_| {
            let c_omega: f64 = rng.random_range(0.35..0.65);
            let room = c_omega.min(1.0 - c_omega) - 0.05;
            Bump {
                center: [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.5..0.5),
                    c_omega,
                    rng.random_range(-0.5..0.5),
                ],
                width: [
                    rng.random_range(0.3..1.0),
                    rng.random_range(0.2..0.6),
                    rng.random_range(0.05..room.min(0.25)),
                    rng.random_range(0.2..0.6),
                ],
                amplitude: rng.random_range(0.5..20.0),
            }
        })
        .collect();
    InitialDatum::Bumps {
        bumps,
        cells: [7, 7, 7, 7],
    }
}

fn certified_settings() -> SimSettings {
    SimSettings {
        horizon: 1.0,
        dt_macro: 0.01,
        seed_control: StepControl::with_dt(2.5e-3),
        tracked_seeds: 32,
        safety: DEFAULT_SAFETY,
        ..SimSettings::default()
    }
}

#[test]
fn criterion_6_certificate_soundness() {
    let start = Instant::now();
    let model = HookeModel::tangent(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kinds = [
        CheckKind::ChaoticBound,
        CheckKind::ExcursionEnvelope,
        CheckKind::GlobalEnvelope,
        CheckKind::OmegaConfinement,
        CheckKind::WorkBound,
    ];
    let mut violations = [0usize; 5];
    let mut checked = [0usize; 5];
    let mut runs = 0;
    for _ in 0..32 {
        let datum = random_datum(&mut rng);
        let out = run(&datum, &model, &certified_settings()).unwrap();
        let cert = &out.certificate;
        if !cert.c_raised {
            assert_eq!(cert.c, DEFAULT_SAFETY * 2.0 * cert.mass);
        }
        for s in &out.seeds {
            let r = s.report.as_ref().unwrap();
            for (i, k) in kinds.iter().enumerate() {
                violations[i] += r.check(*k).violations;
                checked[i] += r.check(*k).checked;
            }
        }
        runs += 1;
    }
    let elapsed = start.elapsed();
    let total: usize = violations.iter().sum();
    let pass = total == 0 && within(elapsed, 600.0);
    let per_kind: Vec<String> = kinds
        .iter()
        .zip(violations.iter().zip(&checked))
        .map(|(k, (v, c))| format!("{k:?} {v}/{c}"))
        .collect();
    report(
        6,
        "certificate soundness",
        pass,
        &format!("{runs} runs x 32 seeds, violations {} (slack 1e-6), runtime {elapsed:.2?} (limit 600 s)", per_kind.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_7_picard_contraction() {
    let start = Instant::now();
    let model = HookeModel::tangent(1.0).unwrap();
    let datum = InitialDatum::single_bump(
        [0.0, 0.0, 0.5, 0.0],
        [1.0, 0.5, 0.2, 0.5],
        28.6,
        [13, 13, 13, 13],
    );
    let ens = datum.sample().unwrap();
    let cert = diatomic_vp::bounds::BoundCertificate::from_support(
        &model,
        &ens.support,
        ens.mass(),
        1.0,
        DEFAULT_SAFETY,
    )
    .unwrap();
    let horizon = 0.5 * cert.t0;
    let settings = PicardSettings {
        horizon,
        dt_macro: horizon / 8.0,
        control: StepControl::with_dt(horizon / 32.0),
        n_max: 8,
        ..PicardSettings::default()
    };
    let records = iterate(&datum, &model, &settings).unwrap();
    let fit = fit_contraction(&records, horizon, 8).unwrap();
    let d1 = records.iter().find(|r| r.n == 1).unwrap().sup_delta;
    let d8 = records.iter().find(|r| r.n == 8).unwrap().sup_delta;
    let elapsed = start.elapsed();
    let pass = fit.envelope_holds && d8 < 1e-8 * d1 && within(elapsed, 300.0);
    let deltas: Vec<String> = records
        .iter()
        .map(|r| format!("{:.2e}", r.sup_delta))
        .collect();
    report(
        7,
        "Picard contraction",
        pass,
        &format!(
            "{} particles, L1 {:.4}, T = t0/2 = {horizon:.5}, sup_delta [{}], K = {:.4e}, envelope {}, \
             delta8/delta1 = {:.2e} (tol 1e-8), runtime {elapsed:.2?} (limit 300 s)",
            ens.len(),
            ens.mass(),
            deltas.join(", "),
            fit.k,
            if fit.envelope_holds { "holds" } else { "violated" },
            d8 / d1,
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_continuation_health() {
    let model = HookeModel::tangent(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fails = 0;
    let mut warns = 0;
    let runs = 8;
    let mut last = None;
    for _ in 0..runs {
        let datum = random_datum(&mut rng);
        let out = run(&datum, &model, &certified_settings()).unwrap();
        fails += out
            .diagnostics
            .iter()
            .filter(|d| d.status.is_fail())
            .count();
        warns += out
            .diagnostics
            .iter()
            .filter(|d| matches!(d.status, ContinuationStatus::Warn(_)))
            .count();
        last = Some(out);
    }
    let out = last.unwrap();

    // negative controls: an injected ω collapse and an edited path on disk
    let mut diag = out.diagnostics[0].clone();
    diag.support.omega_lo = 0.0;
    let injected = check_continuation(&diag, &out.certificate, 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run1");
    let code_ok = dispatch([
        "diatomic",
        "trajectory",
        "--output",
        run_dir.to_str().unwrap(),
        "--set",
        r#"trajectory.field={"kind":"constant","f_plus":0.3,"f_minus":1.5}"#,
        "--set",
        "trajectory.initial=[0,0,0.7,1.5]",
    ]);
    let clean = dispatch(["diatomic", "certify", "--path", run_dir.to_str().unwrap()]);
    let file = run_dir.join("path.csv");
    let text = std::fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[120].split(',').map(str::to_string).collect();
    cells[4] = format!("{:.16e}", 80.0);
    lines[120] = cells.join(",");
    std::fs::write(&file, lines.join("\n") + "\n").unwrap();
    let edited = dispatch(["diatomic", "certify", "--path", run_dir.to_str().unwrap()]);

    let pass = fails == 0
        && injected == ContinuationStatus::Fail(Coordinate::OmegaLower)
        && code_ok == EXIT_OK
        && clean == EXIT_OK
        && edited == EXIT_VIOLATION;
    report(
        8,
        "continuation health",
        pass,
        &format!(
            "{runs} certified runs: {fails} Fail, {warns} Warn statuses; injected omega_lo = 0 -> {}; \
             certify clean path -> exit {clean}, edited path -> exit {edited}",
            injected.label()
        ),
    );
    assert!(pass);
}
