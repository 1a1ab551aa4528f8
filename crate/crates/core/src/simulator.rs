//! Self-consistent evolution: rebuild the step field, record diagnostics,
//! push every particle one macro step, repeat.
//!
//! Tracked seeds are massless characteristics integrated with a finer step
//! in the same fields. Each carries a bundle of eight perturbed copies that
//! replay its step schedule, giving a running estimate of `det J`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{certify, BoundCertificate, BoundsError, CertReport, DEFAULT_SAFETY};
use crate::datum::{halton_point, DatumError, InitialDatum};
use crate::field::{ordered_sum, Ensemble, FieldError, FieldSnapshot, ParticleState, SupportBox};
use crate::hooke::{HookeError, HookeModel};
use crate::trajectory::{
    advance, detect_events, flow, replay, EventKind, Frozen, OscillationEvent, StepControl,
    TrajectoryError, TrajectoryPath,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("particle {index}: {source}")]
    Particle {
        index: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error("tracked seed {index}: {source}")]
    Seed {
        index: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error("invalid run settings: {0}")]
    Config(String),
    #[error("observer: {0}")]
    Observer(String),
    #[error(transparent)]
    Datum(#[from] DatumError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Hooke(#[from] HookeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub horizon: f64,
    pub dt_macro: f64,
    /// Step control of the tracked seeds; the ensemble uses `dt_macro`.
    pub seed_control: StepControl,
    pub tracked_seeds: usize,
    /// Perturbation of the Jacobian bundles. The step field jumps at every particle, so
    /// `h` must exceed the particle spacing for the bundle to see the averaged flow.
    pub jacobian_h: f64,
    /// Relative margin below which `check_continuation` warns.
    pub margin: f64,
    pub safety: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt_macro: 1e-2,
            seed_control: StepControl::with_dt(2.5e-3),
            tracked_seeds: 32,
            jacobian_h: 1e-2,
            margin: 1e-6,
            safety: DEFAULT_SAFETY,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon {} must be nonnegative",
                self.horizon
            )));
        }
        if !(self.dt_macro > 0.0) {
            return Err(SimError::Config(format!(
                "dt_macro {} must be positive",
                self.dt_macro
            )));
        }
        if !(self.jacobian_h > 0.0) || !(self.margin >= 0.0) || !(self.safety >= 1.0) {
            return Err(SimError::Config(
                "need jacobian_h > 0, margin ≥ 0, safety ≥ 1".into(),
            ));
        }
        self.seed_control
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))
    }

    fn macro_control(&self) -> StepControl {
        StepControl {
            dt: self.dt_macro,
            ..self.seed_control
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    XLower,
    XUpper,
    VLower,
    VUpper,
    OmegaLower,
    OmegaUpper,
    EtaLower,
    EtaUpper,
}

impl Coordinate {
    pub fn label(&self) -> &'static str {
        match self {
            Coordinate::XLower => "x_lower",
            Coordinate::XUpper => "x_upper",
            Coordinate::VLower => "v_lower",
            Coordinate::VUpper => "v_upper",
            Coordinate::OmegaLower => "omega_lower",
            Coordinate::OmegaUpper => "omega_upper",
            Coordinate::EtaLower => "eta_lower",
            Coordinate::EtaUpper => "eta_upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "coordinate", rename_all = "snake_case")]
pub enum ContinuationStatus {
    Pass,
    Warn(Coordinate),
    Fail(Coordinate),
}

impl ContinuationStatus {
    pub fn label(&self) -> String {
        match self {
            ContinuationStatus::Pass => "pass".into(),
            ContinuationStatus::Warn(c) => format!("warn:{}", c.label()),
            ContinuationStatus::Fail(c) => format!("fail:{}", c.label()),
        }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, ContinuationStatus::Fail(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub exits: usize,
    pub stoppings: usize,
    pub returns: usize,
}

impl EventCounts {
    fn of(events: &[OscillationEvent]) -> Self {
        let mut c = Self::default();
        for e in events {
            match e.kind {
                EventKind::Exit(_) => c.exits += 1,
                EventKind::Stopping => c.stoppings += 1,
                EventKind::Return(_) => c.returns += 1,
            }
        }
        c
    }

    fn add(&mut self, o: &Self) {
        self.exits += o.exits;
        self.stoppings += o.stoppings;
        self.returns += o.returns;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time: f64,
    pub l1: f64,
    pub linf: f64,
    pub support: SupportBox,
    pub sup_f: f64,
    pub sup_pm: f64,
    pub e_kin: f64,
    pub e_osc: f64,
    /// `Σ w v`
    pub momentum: f64,
    pub events: EventCounts,
    pub detj_err: f64,
    pub status: ContinuationStatus,
}

/// Ensemble-wide quantities at one time; events, `det J` and status are filled by the run.
pub fn diagnostics(
    ensemble: &Ensemble,
    snapshot: &FieldSnapshot,
    model: &HookeModel,
) -> Result<Diagnostics, SimError> {
    let (sup_f, sup_pm) = snapshot.norms();
    let potentials: Vec<f64> = ensemble
        .particles
        .par_iter()
        .map(|p| model.potential(p.omega))
        .collect::<Result<_, _>>()?;
    let osc: Vec<(f64, f64)> = ensemble
        .particles
        .iter()
        .zip(&potentials)
        .map(|(p, &u)| (p.w, u))
        .collect();
    let ps = &ensemble.particles;
    Ok(Diagnostics {
        time: ensemble.time,
        l1: ensemble.mass(),
        linf: ensemble.linf(),
        support: ensemble.support,
        sup_f,
        sup_pm,
        e_kin: ordered_sum(ps, |p| 0.5 * p.w * p.v * p.v),
        e_osc: ordered_sum(ps, |p| 0.5 * p.w * p.eta * p.eta) + ordered_sum(&osc, |(w, u)| w * u),
        momentum: ordered_sum(ps, |p| p.w * p.v),
        events: EventCounts::default(),
        detj_err: 0.0,
        status: ContinuationStatus::Pass,
    })
}

/// Compares the support box against the certified box; `margin` is relative to each bound.
pub fn check_continuation(
    diag: &Diagnostics,
    cert: &BoundCertificate,
    margin: f64,
) -> ContinuationStatus {
    let s = &diag.support;
    let b = &cert.certified_box;
    if !(s.omega_lo > 0.0) {
        return ContinuationStatus::Fail(Coordinate::OmegaLower);
    }
    if !(s.omega_hi < cert.epsilon) {
        return ContinuationStatus::Fail(Coordinate::OmegaUpper);
    }
    // (coordinate, value, bound, +1 if the value must stay below the bound)
    let rows = [
        (Coordinate::XLower, s.x_lo, b.x_lo, -1.0),
        (Coordinate::XUpper, s.x_hi, b.x_hi, 1.0),
        (Coordinate::VLower, s.v_lo, b.v_lo, -1.0),
        (Coordinate::VUpper, s.v_hi, b.v_hi, 1.0),
        (Coordinate::OmegaLower, s.omega_lo, b.omega_lo, -1.0),
        (Coordinate::OmegaUpper, s.omega_hi, b.omega_hi, 1.0),
        (Coordinate::EtaLower, s.eta_lo, b.eta_lo, -1.0),
        (Coordinate::EtaUpper, s.eta_hi, b.eta_hi, 1.0),
    ];
    let mut status = ContinuationStatus::Pass;
    for (c, value, bound, dir) in rows {
        let room = dir * (bound - value);
        let m = margin * bound.abs().max(1.0);
        if !(room >= 0.0) {
            return ContinuationStatus::Fail(c);
        }
        if room <= m && status == ContinuationStatus::Pass {
            status = ContinuationStatus::Warn(c);
        }
    }
    status
}

/// A massless characteristic with its Jacobian bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackedSeed {
    pub path: TrajectoryPath,
    /// Copies perturbed by `±h` along each axis, order `(+x, −x, +v, −v, …)`; `widths` holds the actual spreads.
    pub bundle: Vec<[f64; 4]>,
    pub widths: [f64; 4],
    pub events: Vec<OscillationEvent>,
    pub report: Option<CertReport>,
}

impl TrackedSeed {
    fn new(z: [f64; 4], h: f64, t0: f64, epsilon: f64) -> Self {
        let mut bundle = Vec::with_capacity(8);
        let mut widths = [0.0; 4];
        // ω copies stay well inside (0, ε)
        let h_omega = h.min(0.25 * z[2].min(epsilon - z[2]));
        for j in 0..4 {
            let hj = if j == 2 { h_omega } else { h };
            let (mut p, mut m) = (z, z);
            p[j] += hj;
            m[j] -= hj;
            widths[j] = p[j] - m[j];
            bundle.push(p);
            bundle.push(m);
        }
        Self {
            path: TrajectoryPath::start(&ParticleState::new(z[0], z[1], z[2], z[3], 0.0), t0),
            bundle,
            widths,
            events: Vec::new(),
            report: None,
        }
    }

    pub fn jacobian_det(&self) -> f64 {
        let j = nalgebra::Matrix4::from_fn(|i, k| {
            (self.bundle[2 * k][i] - self.bundle[2 * k + 1][i]) / self.widths[k]
        });
        j.determinant()
    }
}

/// Corners of `b` first, then Halton points inside it.
pub fn seed_points(b: &SupportBox, count: usize) -> Vec<[f64; 4]> {
    let (lo, hi) = (b.lo(), b.hi());
    let mut out: Vec<[f64; 4]> = (0..16usize)
        .map(|m| std::array::from_fn(|i| if m >> i & 1 == 0 { lo[i] } else { hi[i] }))
        .take(count)
        .collect();
    let mut i = 0;
    while out.len() < count {
        out.push(halton_point(i, b));
        i += 1;
    }
    out
}

pub struct RunOutput {
    pub ensemble: Ensemble,
    pub diagnostics: Vec<Diagnostics>,
    pub seeds: Vec<TrackedSeed>,
    pub certificate: BoundCertificate,
}

impl RunOutput {
    pub fn any_fail(&self) -> bool {
        self.diagnostics.iter().any(|d| d.status.is_fail())
    }

    pub fn seeds_certified(&self) -> bool {
        self.seeds
            .iter()
            .all(|s| s.report.as_ref().is_none_or(|r| r.passed))
    }
}

/// Samples `datum` and runs to the horizon.
pub fn run(
    datum: &InitialDatum,
    model: &HookeModel,
    settings: &SimSettings,
) -> Result<RunOutput, SimError> {
    datum.validate(model.epsilon())?;
    run_ensemble(datum.sample()?, model, settings)
}

pub fn run_ensemble(
    initial: Ensemble,
    model: &HookeModel,
    settings: &SimSettings,
) -> Result<RunOutput, SimError> {
    run_observed(initial, model, settings, &mut |_, _, _| Ok(()))
}

/// Macro-step hook: step index, ensemble and its field, called before each push and at the end.
pub type Observer<'a> = dyn FnMut(usize, &Ensemble, &FieldSnapshot) -> Result<(), SimError> + 'a;

pub fn run_observed(
    initial: Ensemble,
    model: &HookeModel,
    settings: &SimSettings,
    observer: &mut Observer<'_>,
) -> Result<RunOutput, SimError> {
    settings.validate()?;
    let eps = model.epsilon();
    if !(initial.support.omega_lo > 0.0 && initial.support.omega_hi < eps) {
        return Err(SimError::Config(format!(
            "omega support [{}, {}] must lie strictly inside (0, {eps})",
            initial.support.omega_lo, initial.support.omega_hi
        )));
    }
    let cert = BoundCertificate::from_support(
        model,
        &initial.support,
        initial.mass(),
        settings.horizon,
        settings.safety,
    )?;
    let macro_control = settings.macro_control();
    let steps = (settings.horizon / settings.dt_macro - 1e-9)
        .ceil()
        .max(0.0) as usize;

    let mut seeds: Vec<TrackedSeed> = seed_points(&initial.support, settings.tracked_seeds)
        .into_iter()
        .map(|z| TrackedSeed::new(z, settings.jacobian_h, initial.time, eps))
        .collect();
    let mut ens = initial;
    let mut diags = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let snap = FieldSnapshot::build(&ens)?;
        observer(k, &ens, &snap)?;
        let mut d = diagnostics(&ens, &snap, model)?;
        d.detj_err = seeds
            .iter()
            .fold(0.0_f64, |m, s| m.max((s.jacobian_det() - 1.0).abs()));
        let mut counts = EventCounts::default();
        for s in &seeds {
            counts.add(&EventCounts::of(&detect_events(
                &s.path,
                &cert.balance,
                settings.seed_control.event_tol,
            )));
        }
        d.events = counts;
        d.status = check_continuation(&d, &cert, settings.margin);
        diags.push(d);
        if k == steps {
            break;
        }

        let t = ens.time;
        let t_next = if k + 1 == steps {
            settings.horizon
        } else {
            (k + 1) as f64 * settings.dt_macro
        };
        let provider = Frozen(&snap);
        let moved: Vec<ParticleState> = ens
            .particles
            .par_iter()
            .enumerate()
            .map(|(index, p)| {
                flow(p, &provider, model, t, t_next, &macro_control)
                    .map_err(|source| SimError::Particle { index, source })
            })
            .collect::<Result<_, _>>()?;
        seeds
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(index, s)| -> Result<(), SimError> {
                let first = s.path.steps.len();
                advance(
                    &mut s.path,
                    &provider,
                    model,
                    t_next,
                    &settings.seed_control,
                )
                .map_err(|source| SimError::Seed { index, source })?;
                let new_steps = &s.path.steps[first..];
                for z in s.bundle.iter_mut() {
                    *z = replay(*z, new_steps, &provider, model, &settings.seed_control)
                        .map_err(|source| SimError::Seed { index, source })?;
                }
                Ok(())
            })?;
        ens = ens.moved_to(moved, t_next)?;
    }

    for s in seeds.iter_mut() {
        s.events = detect_events(&s.path, &cert.balance, settings.seed_control.event_tol);
        s.path.events = s.events.clone();
        s.report = Some(certify(&s.path, &cert, &s.events, model));
    }
    Ok(RunOutput {
        ensemble: ens,
        diagnostics: diags,
        seeds,
        certificate: cert,
    })
}
