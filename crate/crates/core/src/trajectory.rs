//! Characteristics of the diatomic system and their oscillation events.
//!
//! One step of length `dt` is the symmetric composition
//!
//! ```text
//! kick(dt/2) · [x-drift(dt) ⊗ bond-flow(dt)] · kick(dt/2)
//! ```
//!
//! where the kick adds `F⁺ dt/2` to `v` and `F⁻ dt/2` to `η`, and the bond
//! flow advances `(ω, η)` under `F^h` alone by `m` leapfrog substeps. Every
//! factor is a shear, so the step map has unit Jacobian for any `dt`.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldSnapshot, ParticleState};
use crate::hooke::{BalancePoints, HookeError, HookeModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("step underflow at t = {t}: bond length left the guard band even at dt = {dt} (state {state:?})")]
    StepUnderflow { t: f64, dt: f64, state: [f64; 4] },
    #[error(
        "field provider covers [{have_lo}, {have_hi}], integration needs [{need_lo}, {need_hi}]"
    )]
    FieldGap {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },
    #[error("segment [{ta}, {tb}] outside path range [{lo}, {hi}]")]
    SegmentOutOfRange { ta: f64, tb: f64, lo: f64, hi: f64 },
    #[error("invalid step control: {0}")]
    Control(String),
    #[error("initial state: {0}")]
    InitialState(String),
    #[error(transparent)]
    Hooke(#[from] HookeError),
}

/// A frozen field queried through `F^±`.
pub trait PairField: Sync {
    /// `(F⁺(x, ω), F⁻(x, ω))`
    fn pm(&self, x: f64, omega: f64) -> (f64, f64);
    /// An upper bound on `|F^±|`.
    fn sup_pm(&self) -> f64;
}

impl PairField for FieldSnapshot {
    #[inline]
    fn pm(&self, x: f64, omega: f64) -> (f64, f64) {
        self.pm_unchecked(x, omega)
    }

    fn sup_pm(&self) -> f64 {
        self.total_mass()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl PairField for ZeroField {
    fn pm(&self, _: f64, _: f64) -> (f64, f64) {
        (0.0, 0.0)
    }

    fn sup_pm(&self) -> f64 {
        0.0
    }
}

/// Spatially constant `F^±`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPm {
    pub f_plus: f64,
    pub f_minus: f64,
}

impl PairField for ConstantPm {
    fn pm(&self, _: f64, _: f64) -> (f64, f64) {
        (self.f_plus, self.f_minus)
    }

    fn sup_pm(&self) -> f64 {
        self.f_plus.abs().max(self.f_minus.abs())
    }
}

/// Field of a Gaussian mixture of atomic mass,
/// `F(x) = −½ Σ mₖ erf((x − cₖ)/(√2 sₖ))`. Smooth, so the step map is too.
#[derive(Debug, Clone)]
pub struct SmoothField {
    components: Vec<(f64, f64, f64)>,
}

impl SmoothField {
    /// `(center, width, mass)` triples; widths must be positive.
    pub fn new(components: Vec<(f64, f64, f64)>) -> Self {
        assert!(components.iter().all(|c| c.1 > 0.0 && c.2 >= 0.0));
        Self { components }
    }

    pub fn field_at(&self, x: f64) -> f64 {
        -0.5 * self
            .components
            .iter()
            .map(|&(c, s, m)| m * libm::erf((x - c) / (std::f64::consts::SQRT_2 * s)))
            .sum::<f64>()
    }
}

impl PairField for SmoothField {
    fn pm(&self, x: f64, omega: f64) -> (f64, f64) {
        let r = self.field_at(x + omega);
        let l = self.field_at(x - omega);
        (r + l, r - l)
    }

    fn sup_pm(&self) -> f64 {
        self.components.iter().map(|c| c.2).sum()
    }
}

/// A time-indexed source of frozen fields, piecewise constant in time.
pub trait FieldProvider: Sync {
    /// Closed time interval on which fields are available.
    fn span(&self) -> (f64, f64);
    /// Field of the piece `[tₖ, tₖ₊₁)` containing `t`.
    fn field(&self, t: f64) -> &dyn PairField;
    /// Nearest piece boundary strictly after `t` (or before, when `forward` is false).
    fn next_breakpoint(&self, t: f64, forward: bool) -> Option<f64>;
}

/// One field for all times.
pub struct Frozen<'a>(pub &'a dyn PairField);

impl FieldProvider for Frozen<'_> {
    fn span(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn field(&self, _: f64) -> &dyn PairField {
        self.0
    }

    fn next_breakpoint(&self, _: f64, _: bool) -> Option<f64> {
        None
    }
}

/// Snapshots `fields[k]` valid on `[times[k], times[k+1])`, the last one up to `end`.
#[derive(Debug, Clone)]
pub struct FieldHistory<P: PairField = FieldSnapshot> {
    times: Vec<f64>,
    fields: Vec<P>,
    end: f64,
}

impl<P: PairField> FieldHistory<P> {
    pub fn new(times: Vec<f64>, fields: Vec<P>, end: f64) -> Result<Self, TrajectoryError> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(TrajectoryError::Control(
                "field history needs one time per snapshot".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || !(end >= times[times.len() - 1]) {
            return Err(TrajectoryError::Control(
                "field history times must increase".into(),
            ));
        }
        Ok(Self { times, fields, end })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[P] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    fn piece(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).max(1) - 1
    }
}

impl<P: PairField> FieldProvider for FieldHistory<P> {
    fn span(&self) -> (f64, f64) {
        (self.times[0], self.end)
    }

    fn field(&self, t: f64) -> &dyn PairField {
        &self.fields[self.piece(t)]
    }

    fn next_breakpoint(&self, t: f64, forward: bool) -> Option<f64> {
        let inner = &self.times[1..];
        if forward {
            let k = inner.partition_point(|&s| s <= t);
            inner.get(k).copied()
        } else {
            let k = inner.partition_point(|&s| s < t);
            k.checked_sub(1).map(|k| inner[k])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    /// Nominal step length.
    pub dt: f64,
    /// Bond substeps are chosen so that `|F^h| · dt/m ≤ eta_scale`.
    pub eta_scale: f64,
    pub max_substeps: usize,
    /// Rejected steps are halved at most this many times.
    pub max_halvings: u32,
    /// Event times are located to `event_tol · dt`.
    pub event_tol: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            eta_scale: 0.1,
            max_substeps: 1 << 16,
            max_halvings: 10,
            event_tol: 1e-3,
        }
    }
}

impl StepControl {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TrajectoryError::Control(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.eta_scale > 0.0) || self.max_substeps == 0 {
            return Err(TrajectoryError::Control(
                "eta_scale and max_substeps must be positive".into(),
            ));
        }
        if !(self.event_tol > 0.0 && self.event_tol < 1.0) {
            return Err(TrajectoryError::Control(
                "event_tol must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted step: forces at both ends are those of the step's field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t0: f64,
    pub t1: f64,
    pub substeps: usize,
    /// Halving depth at which the step was accepted.
    pub depth: u32,
    pub fp0: f64,
    pub fm0: f64,
    pub fh0: f64,
    pub fp1: f64,
    pub fm1: f64,
    pub fh1: f64,
    pub sup_pm: f64,
}

impl StepRecord {
    pub fn eta_rate0(&self) -> f64 {
        self.fm0 + self.fh0
    }

    pub fn eta_rate1(&self) -> f64 {
        self.fm1 + self.fh1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `Ω_m`
    Lower,
    /// `Ω_M`
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Exit(Side),
    Stopping,
    Return(Side),
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Exit(Side::Lower) => "exit_lower",
            EventKind::Exit(Side::Upper) => "exit_upper",
            EventKind::Stopping => "stopping",
            EventKind::Return(Side::Lower) => "return_lower",
            EventKind::Return(Side::Upper) => "return_upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationEvent {
    pub kind: EventKind,
    pub time: f64,
    /// Interpolated `(x, v, ω, η)` at `time`.
    pub state: [f64; 4],
    /// Index of the step containing the event.
    pub step: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryPath {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 4]>,
    /// `steps[k]` joins samples `k` and `k + 1`.
    pub steps: Vec<StepRecord>,
    pub events: Vec<OscillationEvent>,
    pub weight: f64,
}

impl TrajectoryPath {
    pub fn start(state: &ParticleState, t0: f64) -> Self {
        Self {
            times: vec![t0],
            states: vec![state.coords()],
            steps: Vec::new(),
            events: Vec::new(),
            weight: state.w,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn last_state(&self) -> ParticleState {
        let z = self.states[self.states.len() - 1];
        ParticleState::new(z[0], z[1], z[2], z[3], self.weight)
    }

    /// `(F⁺, F⁻, η', sup|F^±|)` at sample `i`, taken from the step that starts there
    /// (the last sample uses the step that ends there).
    pub fn forces_at(&self, i: usize) -> Option<(f64, f64, f64, f64)> {
        if self.steps.is_empty() {
            return None;
        }
        if i < self.steps.len() {
            let s = &self.steps[i];
            Some((s.fp0, s.fm0, s.eta_rate0(), s.sup_pm))
        } else {
            let s = &self.steps[self.steps.len() - 1];
            Some((s.fp1, s.fm1, s.eta_rate1(), s.sup_pm))
        }
    }

    /// Cubic Hermite interpolation of `(ω, η)` and linear `(x, v)` inside step `k`.
    pub fn interpolate(&self, k: usize, t: f64) -> [f64; 4] {
        let s = &self.steps[k];
        let (a, b) = (self.states[k], self.states[k + 1]);
        let h = s.t1 - s.t0;
        let u = (t - s.t0) / h;
        let lin = |p: f64, q: f64| p + (q - p) * u;
        [
            lin(a[0], b[0]),
            lin(a[1], b[1]),
            hermite(a[2], a[3], b[2], b[3], h, u),
            hermite(a[3], s.eta_rate0(), b[3], s.eta_rate1(), h, u),
        ]
    }

    pub fn max_abs_eta(&self) -> f64 {
        self.states.iter().fold(0.0_f64, |m, z| m.max(z[3].abs()))
    }
}

fn hermite(p0: f64, d0: f64, p1: f64, d1: f64, h: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * p0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * p1
        + (u3 - u2) * h * d1
}

struct Attempt {
    z: [f64; 4],
    substeps: usize,
    fp0: f64,
    fm0: f64,
    fp1: f64,
    fm1: f64,
}

/// One splitting step, or `None` if `ω` leaves the guard band. `forced`
/// replays a recorded substep count and disables the stiffness check.
fn attempt(
    z: [f64; 4],
    field: &dyn PairField,
    model: &HookeModel,
    dt: f64,
    control: &StepControl,
    forced: Option<usize>,
) -> Option<Attempt> {
    let [mut x, mut v, mut w, mut eta] = z;
    let half = 0.5 * dt;
    let (fp0, fm0) = field.pm(x, w);
    v += fp0 * half;
    eta += fm0 * half;
    x += v * dt;

    let fh_start = model.force_unchecked(w);
    let m = forced.unwrap_or_else(|| {
        let need = (fh_start.abs() * dt.abs() / control.eta_scale).ceil();
        (need as usize).clamp(1, control.max_substeps)
    });
    let h = dt / m as f64;
    let limit = 4.0 * control.eta_scale;
    let mut fh = fh_start;
    for _ in 0..m {
        eta += fh * 0.5 * h;
        w += eta * h;
        if !model.in_domain(w) {
            return None;
        }
        fh = model.force_unchecked(w);
        if forced.is_none() && (fh * h).abs() > limit {
            return None;
        }
        eta += fh * 0.5 * h;
    }

    let (fp1, fm1) = field.pm(x, w);
    v += fp1 * half;
    eta += fm1 * half;
    if !(x.is_finite() && v.is_finite() && eta.is_finite()) {
        return None;
    }
    Some(Attempt {
        z: [x, v, w, eta],
        substeps: m,
        fp0,
        fm0,
        fp1,
        fm1,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_recursive(
    z: [f64; 4],
    field: &dyn PairField,
    model: &HookeModel,
    ta: f64,
    tb: f64,
    control: &StepControl,
    depth: u32,
    out: &mut Vec<(StepRecord, [f64; 4])>,
) -> Result<[f64; 4], TrajectoryError> {
    if let Some(a) = attempt(z, field, model, tb - ta, control, None) {
        out.push((
            StepRecord {
                t0: ta,
                t1: tb,
                substeps: a.substeps,
                depth,
                fp0: a.fp0,
                fm0: a.fm0,
                fh0: model.force_unchecked(z[2]),
                fp1: a.fp1,
                fm1: a.fm1,
                fh1: model.force_unchecked(a.z[2]),
                sup_pm: field.sup_pm(),
            },
            a.z,
        ));
        return Ok(a.z);
    }
    if depth >= control.max_halvings {
        return Err(TrajectoryError::StepUnderflow {
            t: ta,
            dt: tb - ta,
            state: z,
        });
    }
    let mid = 0.5 * (ta + tb);
    let zm = step_recursive(z, field, model, ta, mid, control, depth + 1, out)?;
    step_recursive(zm, field, model, mid, tb, control, depth + 1, out)
}

fn check_start(state: &ParticleState, model: &HookeModel) -> Result<(), TrajectoryError> {
    if !state.coords().iter().all(|c| c.is_finite()) {
        return Err(TrajectoryError::InitialState(
            "non-finite coordinate".into(),
        ));
    }
    if !model.in_domain(state.omega) {
        return Err(TrajectoryError::InitialState(format!(
            "bond length {} outside the guard band of (0, {})",
            state.omega,
            model.epsilon()
        )));
    }
    Ok(())
}

/// Advances `state` by one step of signed length `dt` under a frozen field,
/// halving on rejection.
pub fn push(
    state: &ParticleState,
    field: &dyn PairField,
    model: &HookeModel,
    dt: f64,
    control: &StepControl,
) -> Result<ParticleState, TrajectoryError> {
    check_start(state, model)?;
    let mut sink = Vec::new();
    let z = step_recursive(state.coords(), field, model, 0.0, dt, control, 0, &mut sink)?;
    Ok(state.with_coords(z))
}

/// Extends `path` from its last sample to `t_end` (either direction).
pub fn advance(
    path: &mut TrajectoryPath,
    provider: &dyn FieldProvider,
    model: &HookeModel,
    t_end: f64,
    control: &StepControl,
) -> Result<(), TrajectoryError> {
    control.validate()?;
    let t_start = path.last_time();
    check_start(&path.last_state(), model)?;
    let (lo, hi) = provider.span();
    let (need_lo, need_hi) = (t_start.min(t_end), t_start.max(t_end));
    if need_lo < lo || need_hi > hi {
        return Err(TrajectoryError::FieldGap {
            need_lo,
            need_hi,
            have_lo: lo,
            have_hi: hi,
        });
    }
    let forward = t_end >= t_start;
    let dir = if forward { 1.0 } else { -1.0 };
    let sliver = 1e-9 * control.dt;
    let mut t = t_start;
    let mut z = path.states[path.states.len() - 1];
    let mut out = Vec::new();
    while (t_end - t) * dir > sliver {
        let mut target = t + dir * control.dt;
        if (target - t_end) * dir > -sliver {
            target = t_end;
        }
        if let Some(b) = provider.next_breakpoint(t, forward) {
            if (target - b) * dir > 0.0 && (b - t) * dir > sliver {
                target = b;
            }
        }
        let field = provider.field(t.min(target));
        out.clear();
        z = step_recursive(z, field, model, t, target, control, 0, &mut out)?;
        for (rec, s) in out.drain(..) {
            path.times.push(rec.t1);
            path.states.push(s);
            path.steps.push(rec);
        }
        t = target;
    }
    Ok(())
}

/// Integrates from `t0` to `t1`, recording every accepted step.
pub fn integrate(
    state: &ParticleState,
    provider: &dyn FieldProvider,
    model: &HookeModel,
    t0: f64,
    t1: f64,
    control: &StepControl,
) -> Result<TrajectoryPath, TrajectoryError> {
    let mut path = TrajectoryPath::start(state, t0);
    advance(&mut path, provider, model, t1, control)?;
    Ok(path)
}

/// [`integrate`] followed by event detection against `balance`.
pub fn integrate_tracked(
    state: &ParticleState,
    provider: &dyn FieldProvider,
    model: &HookeModel,
    t0: f64,
    t1: f64,
    control: &StepControl,
    balance: &BalancePoints,
) -> Result<TrajectoryPath, TrajectoryError> {
    let mut path = integrate(state, provider, model, t0, t1, control)?;
    path.events = detect_events(&path, balance, control.event_tol);
    Ok(path)
}

/// Endpoint of the characteristic through `state` at `t0`, evaluated at `t1`, without storing samples.
pub fn flow(
    state: &ParticleState,
    provider: &dyn FieldProvider,
    model: &HookeModel,
    t0: f64,
    t1: f64,
    control: &StepControl,
) -> Result<ParticleState, TrajectoryError> {
    let mut path = TrajectoryPath::start(state, t0);
    advance(&mut path, provider, model, t1, control)?;
    Ok(path.last_state())
}

/// Re-runs a recorded step schedule from a different starting point.
pub fn replay(
    z: [f64; 4],
    steps: &[StepRecord],
    provider: &dyn FieldProvider,
    model: &HookeModel,
    control: &StepControl,
) -> Result<[f64; 4], TrajectoryError> {
    let mut z = z;
    for s in steps {
        let field = provider.field(s.t0.min(s.t1));
        z = attempt(z, field, model, s.t1 - s.t0, control, Some(s.substeps))
            .ok_or(TrajectoryError::StepUnderflow {
                t: s.t0,
                dt: s.t1 - s.t0,
                state: z,
            })?
            .z;
    }
    Ok(z)
}

/// Central-difference Jacobian of `z ↦ Z(t1; t0, z)`; all nine runs share the
/// step schedule of the unperturbed one.
pub fn jacobian_matrix(
    seed: &ParticleState,
    provider: &dyn FieldProvider,
    model: &HookeModel,
    t0: f64,
    t1: f64,
    h: f64,
    control: &StepControl,
) -> Result<Matrix4<f64>, TrajectoryError> {
    let center = integrate(seed, provider, model, t0, t1, control)?;
    let z0 = seed.coords();
    let mut jac = Matrix4::zeros();
    for j in 0..4 {
        let mut zp = z0;
        let mut zm = z0;
        zp[j] += h;
        zm[j] -= h;
        let width = zp[j] - zm[j];
        let a = replay(zp, &center.steps, provider, model, control)?;
        let b = replay(zm, &center.steps, provider, model, control)?;
        for i in 0..4 {
            jac[(i, j)] = (a[i] - b[i]) / width;
        }
    }
    Ok(jac)
}

pub fn jacobian_estimate(
    seed: &ParticleState,
    provider: &dyn FieldProvider,
    model: &HookeModel,
    t0: f64,
    t1: f64,
    h: f64,
    control: &StepControl,
) -> Result<f64, TrajectoryError> {
    Ok(jacobian_matrix(seed, provider, model, t0, t1, h, control)?.determinant())
}

/// `[½H² ]_a^b − ∫ H F⁻ ds − ∫_{Ω(a)}^{Ω(b)} F^h dy` over the samples in `[ta, tb]`.
pub fn energy_residual(
    path: &TrajectoryPath,
    ta: f64,
    tb: f64,
    model: &HookeModel,
) -> Result<f64, TrajectoryError> {
    let (lo, hi) = (path.times[0], path.last_time());
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    if path.steps.is_empty() || ta > tb || ta < lo - slack || tb > hi + slack {
        return Err(TrajectoryError::SegmentOutOfRange { ta, tb, lo, hi });
    }
    let ia = path.times.partition_point(|&t| t < ta - slack);
    let ib = path.times.partition_point(|&t| t <= tb + slack) - 1;
    if ib < ia {
        return Err(TrajectoryError::SegmentOutOfRange { ta, tb, lo, hi });
    }
    let (za, zb) = (path.states[ia], path.states[ib]);
    let work: f64 = (ia..ib)
        .map(|k| {
            let s = &path.steps[k];
            0.5 * (s.t1 - s.t0) * (path.states[k][3] * s.fm0 + path.states[k + 1][3] * s.fm1)
        })
        .sum();
    let bond = model.potential(za[2])? - model.potential(zb[2])?;
    Ok(0.5 * zb[3] * zb[3] - 0.5 * za[3] * za[3] - work - bond)
}

fn bisect_root<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut ga = g(a);
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Region code: −1 below `Ω_m`, 0 inside `[Ω_m, Ω_M]`, +1 above `Ω_M`.
fn region(omega: f64, b: &BalancePoints) -> i8 {
    if omega > b.omega_max {
        1
    } else if omega < b.omega_min {
        -1
    } else {
        0
    }
}

/// Balance-point crossings and turning points along `path`, in time order.
///
/// A zero of `H` is a stopping time only outside `[Ω_m, Ω_M]`; a start on
/// a balance point with `H = 0` counts as one.
pub fn detect_events(
    path: &TrajectoryPath,
    balance: &BalancePoints,
    event_tol: f64,
) -> Vec<OscillationEvent> {
    let mut events = Vec::new();
    if path.is_empty() {
        return events;
    }
    let z0 = path.states[0];
    let on_edge = {
        let tol = 1e-12 * (balance.omega_max - balance.omega_min).abs().max(1e-300)
            + 1e-10 * balance.omega_max;
        (z0[2] - balance.omega_max).abs() <= tol || (z0[2] - balance.omega_min).abs() <= tol
    };
    if z0[3] == 0.0 && (region(z0[2], balance) != 0 || on_edge) {
        events.push(OscillationEvent {
            kind: EventKind::Stopping,
            time: path.times[0],
            state: z0,
            step: 0,
        });
    }
    for k in 0..path.steps.len() {
        let s = &path.steps[k];
        let (a, b) = (path.states[k], path.states[k + 1]);
        let tol = event_tol * (s.t1 - s.t0).abs();
        let mut local: Vec<OscillationEvent> = Vec::new();
        let at = |kind: EventKind, t: f64, local: &mut Vec<OscillationEvent>| {
            local.push(OscillationEvent {
                kind,
                time: t,
                state: path.interpolate(k, t),
                step: k,
            });
        };
        let omega_of = |t: f64| path.interpolate(k, t)[2];
        let eta_of = |t: f64| path.interpolate(k, t)[3];

        let (ra, rb) = (region(a[2], balance), region(b[2], balance));
        if ra != rb {
            // upper crossing
            if (ra == 1) != (rb == 1) {
                let t = bisect_root(|t| omega_of(t) - balance.omega_max, s.t0, s.t1, tol);
                let kind = if rb == 1 {
                    EventKind::Exit(Side::Upper)
                } else {
                    EventKind::Return(Side::Upper)
                };
                at(kind, t, &mut local);
            }
            if (ra == -1) != (rb == -1) {
                let t = bisect_root(|t| omega_of(t) - balance.omega_min, s.t0, s.t1, tol);
                let kind = if rb == -1 {
                    EventKind::Exit(Side::Lower)
                } else {
                    EventKind::Return(Side::Lower)
                };
                at(kind, t, &mut local);
            }
        }

        let (sa, sb) = (sign(a[3]), sign(b[3]));
        if sa != 0 && sb != sa {
            let t = if sb == 0 {
                s.t1
            } else {
                bisect_root(eta_of, s.t0, s.t1, tol)
            };
            if region(omega_of(t), balance) != 0 {
                at(EventKind::Stopping, t, &mut local);
            }
        }
        let forward = s.t1 >= s.t0;
        local.sort_by(|p, q| {
            if forward {
                p.time.total_cmp(&q.time)
            } else {
                q.time.total_cmp(&p.time)
            }
        });
        events.extend(local);
    }
    events
}
