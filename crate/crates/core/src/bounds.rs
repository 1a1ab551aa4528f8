//! A-priori constants for the local and global analysis, and a checker that
//! holds integrated trajectories against them.
//!
//! Constants are computed from the initial support box, the total mass and
//! the bond model only; [`certify`] never feeds path data back into them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::SupportBox;
use crate::hooke::{BalancePoints, Branch, HookeError, HookeModel};
use crate::trajectory::{EventKind, OscillationEvent, TrajectoryPath};

/// Default absolute slack of every certificate inequality.
pub const DEFAULT_SLACK: f64 = 1e-6;
/// Default multiplier on `2‖f̊‖_{L¹}` when choosing the field constant.
pub const DEFAULT_SAFETY: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid bound parameters: {0}")]
    Parameters(String),
    #[error("field constant C = {c}: {reason}")]
    InvalidC { c: f64, reason: String },
    #[error("no confinement: potential level {level} is not reached on the {branch:?} branch")]
    NoConfinement { level: f64, branch: Branch },
    #[error(transparent)]
    Hooke(#[from] HookeError),
}

/// A bound that may fail to say anything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Value(f64),
    Vacuous,
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(*v),
            Bound::Vacuous => None,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        matches!(self, Bound::Vacuous)
    }
}

#[derive(Debug, Clone)]
pub struct BoundParameters {
    pub epsilon0: f64,
    /// Bound on `|η|` and `|v|` of the initial support.
    pub r: f64,
    /// Bound on `‖F⁻‖`.
    pub c_minus: f64,
    /// Field constant of the oscillation estimates.
    pub c: f64,
    pub model: HookeModel,
}

impl BoundParameters {
    pub fn new(
        model: HookeModel,
        epsilon0: f64,
        r: f64,
        c_minus: f64,
        c: f64,
    ) -> Result<Self, BoundsError> {
        let eps = model.epsilon();
        if !(epsilon0 > 0.0 && 2.0 * epsilon0 <= eps) {
            return Err(BoundsError::Parameters(format!(
                "need 0 < 2ε₀ ≤ ε, got ε₀ = {epsilon0}, ε = {eps}"
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(BoundsError::Parameters(format!("R = {r} must be positive")));
        }
        if !(c_minus >= 0.0 && c_minus.is_finite()) {
            return Err(BoundsError::Parameters(format!(
                "C₋ = {c_minus} must be nonnegative"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(BoundsError::InvalidC {
                c,
                reason: "must be positive and finite".into(),
            });
        }
        Ok(Self {
            epsilon0,
            r,
            c_minus,
            c,
            model,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.model.epsilon()
    }

    /// Linear comparison function through `(ε/2, 0)` and `(ε₀/2, F^h(ε₀/2))`.
    pub fn comparison(&self, x: f64) -> Result<f64, BoundsError> {
        let eps = self.epsilon();
        Ok((2.0 * x - eps) / (self.epsilon0 - eps) * self.model.force(0.5 * self.epsilon0)?)
    }

    pub fn gronwall_constants(&self) -> Result<(f64, f64), BoundsError> {
        let eps = self.epsilon();
        let fh = self.model.force(0.5 * self.epsilon0)?;
        let c1 = (2.0 * (fh / (self.epsilon0 - eps)).abs()).max(1.0);
        Ok((c1, self.c_minus + 0.5 * eps * c1))
    }

    /// `e^{C₁t}(|ω|+|η|) + C₂(e^{C₁t} − 1)/C₁`
    pub fn phase_bound(&self, omega: f64, eta: f64, t: f64) -> Result<f64, BoundsError> {
        let (c1, c2) = self.gronwall_constants()?;
        Ok(phase(c1, c2, omega.abs() + eta.abs(), t))
    }

    /// `s · e^{C₁s}(|ω|+|η|) + C₂ s (e^{C₁s} − 1)/C₁`
    pub fn displacement_bound(&self, omega: f64, eta: f64, s: f64) -> Result<f64, BoundsError> {
        let (c1, c2) = self.gronwall_constants()?;
        Ok(s * phase(c1, c2, omega.abs() + eta.abs(), s))
    }

    /// Largest `t₀` with `t₀ e^{C₁t₀}(ε+R) + C₂ t₀(e^{C₁t₀} − 1)/C₁ < ε₀/4`.
    pub fn confinement_time(&self) -> Result<f64, BoundsError> {
        let (c1, c2) = self.gronwall_constants()?;
        let a = self.epsilon() + self.r;
        let target = 0.25 * self.epsilon0;
        let f = |s: f64| s * phase(c1, c2, a, s);
        let mut hi = target / a;
        while f(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-15 * hi {
            let m = 0.5 * (lo + hi);
            if f(m) < target {
                lo = m;
            } else {
                hi = m;
            }
        }
        Ok(lo)
    }

    pub fn balance(&self) -> Result<BalancePoints, BoundsError> {
        Ok(self.model.balance_points(self.c)?)
    }

    /// `(I_m, I_M) = (U(Ω_m), U(Ω_M))`
    pub fn balance_levels(&self) -> Result<(f64, f64), BoundsError> {
        let b = self.balance()?;
        Ok((
            self.model.potential(b.omega_min)?,
            self.model.potential(b.omega_max)?,
        ))
    }

    pub fn excursion_envelope(&self, h1: f64) -> f64 {
        (h1 * h1 + 4.0 * self.epsilon() * self.c).sqrt()
    }

    /// Band containing `U(Ω)` at the turning point of an excursion entered with rate `h1`.
    pub fn turning_point_band(&self, h1: f64) -> Result<(f64, f64), BoundsError> {
        let (_, i_max) = self.balance_levels()?;
        let centre = 0.5 * h1 * h1 + i_max;
        let ec = self.epsilon() * self.c;
        Ok(((centre - ec).max(0.0), centre + ec))
    }

    /// `h_M⁻¹(½H₁² + I_M − εC) − Ω_M`, when the level is admissible.
    fn excursion_depth(&self, h1: f64) -> Result<Option<f64>, BoundsError> {
        let b = self.balance()?;
        let (_, i_max) = self.balance_levels()?;
        let level = 0.5 * h1 * h1 + i_max - self.epsilon() * self.c;
        if level < 0.0 {
            return Ok(None);
        }
        Ok(Some(
            self.model.inverse_potential(level, Branch::Right)? - b.omega_max,
        ))
    }

    pub fn return_time_lower_bound(&self, h1: f64) -> Result<Bound, BoundsError> {
        match self.excursion_depth(h1)? {
            Some(d) if d > 0.0 => Ok(Bound::Value(2.0 * d / self.excursion_envelope(h1))),
            _ => Ok(Bound::Vacuous),
        }
    }

    pub fn drift_rate_bound(&self, h1: f64) -> Result<Bound, BoundsError> {
        match self.excursion_depth(h1)? {
            Some(d) if d > 0.0 => Ok(Bound::Value(2.0 * self.epsilon() * self.c / d)),
            _ => Ok(Bound::Vacuous),
        }
    }

    /// `(C₁', C₂', √((C₂'T + η_M)² + 4εC))` of the global argument; `C₁'` is
    /// the larger of the two mirror-image drift constants.
    pub fn global_envelope(
        &self,
        eta_max: f64,
        horizon: f64,
    ) -> Result<(f64, f64, f64), BoundsError> {
        let eps = self.epsilon();
        let ec = eps * self.c;
        let b = self.balance()?;
        let (i_min, i_max) = self.balance_levels()?;
        let d_upper = self.model.inverse_potential(ec + i_max, Branch::Right)? - b.omega_max;
        let d_lower = b.omega_min - self.model.inverse_potential(ec + i_min, Branch::Left)?;
        if !(d_upper > 0.0 && d_lower > 0.0) {
            return Err(BoundsError::InvalidC {
                c: self.c,
                reason: format!("drift denominators {d_upper}, {d_lower} must be positive"),
            });
        }
        let c1 = (2.0 * ec / d_upper).max(2.0 * ec / d_lower);
        let c2 = c1.max(2.0 * self.c);
        let grown = c2 * horizon + eta_max;
        Ok((c1, c2, (grown * grown + 4.0 * ec).sqrt()))
    }

    /// Potential level `CT·envelope + U(ω₀) + ½η_M²` never exceeded up to `T`.
    pub fn confinement_level(
        &self,
        omega0: f64,
        eta_max: f64,
        horizon: f64,
    ) -> Result<f64, BoundsError> {
        let (_, _, env) = self.global_envelope(eta_max, horizon)?;
        Ok(self.c * horizon * env + self.model.potential(omega0)? + 0.5 * eta_max * eta_max)
    }

    /// `[Ω_m^T, Ω_M^T]` from inverting the confinement level on both branches.
    pub fn omega_confinement(
        &self,
        omega0: f64,
        eta_max: f64,
        horizon: f64,
    ) -> Result<(f64, f64), BoundsError> {
        let level = self.confinement_level(omega0, eta_max, horizon)?;
        invert_both(&self.model, level)
    }
}

fn invert_both(model: &HookeModel, level: f64) -> Result<(f64, f64), BoundsError> {
    let inv = |branch| match model.inverse_potential(level, branch) {
        Err(HookeError::Range { .. }) => Err(BoundsError::NoConfinement { level, branch }),
        other => other.map_err(BoundsError::from),
    };
    Ok((inv(Branch::Left)?, inv(Branch::Right)?))
}

fn phase(c1: f64, c2: f64, a: f64, t: f64) -> f64 {
    let g = (c1 * t).exp();
    g * a + c2 * libm::expm1(c1 * t) / c1
}

/// `2C Δt + |H₁|`
pub fn chaotic_bound(h1: f64, dt: f64, c: f64) -> f64 {
    2.0 * c * dt + h1.abs()
}

/// Everything the certificate checks need, for one initial support and horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub r: f64,
    pub c_minus: f64,
    pub c: f64,
    /// `C` was raised above `safety · 2‖f̊‖` to enclose the initial bond lengths.
    pub c_raised: bool,
    pub mass: f64,
    pub horizon: f64,
    pub c1: f64,
    pub c2: f64,
    pub t0: f64,
    pub balance: BalancePoints,
    pub i_min: f64,
    pub i_max: f64,
    pub c1_sec5: f64,
    pub c2_sec5: f64,
    pub eta_max: f64,
    pub h_envelope: f64,
    pub potential_level: f64,
    pub omega_confinement: (f64, f64),
    pub initial_box: SupportBox,
    pub certified_box: SupportBox,
    pub slack: f64,
}

impl BoundCertificate {
    /// Builds the certificate of an initial support box of total mass `mass = ‖f̊‖_{L¹}`.
    pub fn from_support(
        model: &HookeModel,
        support: &SupportBox,
        mass: f64,
        horizon: f64,
        safety: f64,
    ) -> Result<Self, BoundsError> {
        let eps = model.epsilon();
        if !(support.omega_lo > 0.0 && support.omega_hi < eps) {
            return Err(BoundsError::Parameters(format!(
                "bond support [{}, {}] must lie strictly inside (0, {eps})",
                support.omega_lo, support.omega_hi
            )));
        }
        if !(horizon >= 0.0 && safety >= 1.0 && mass >= 0.0) {
            return Err(BoundsError::Parameters(
                "need T ≥ 0, safety ≥ 1, mass ≥ 0".into(),
            ));
        }
        let field_sup = 2.0 * mass;
        let epsilon0 = support.omega_lo.min(eps - support.omega_hi);
        let r = support.max_abs_eta().max(support.max_abs_v()).max(1e-300);
        let eta_max = support.max_abs_eta();

        // the initial bond lengths must lie in the chaotic region of C
        let wall_force = model
            .force(support.omega_lo)?
            .abs()
            .max(model.force(support.omega_hi)?.abs());
        // the chaotic region always spans at least the middle half of (0, ε)
        let floor = model.force(0.25 * eps)?.abs();
        let base = safety * field_sup;
        let needed = (wall_force * (1.0 + 1e-6)).max(floor);
        let (c, c_raised) = if base > wall_force && base >= floor {
            (base, false)
        } else {
            (needed.max(base), true)
        };
        let params = BoundParameters::new(model.clone(), epsilon0, r, field_sup, c)?;
        let (c1, c2) = params.gronwall_constants()?;
        let t0 = params.confinement_time()?;
        let balance = params.balance()?;
        let (i_min, i_max) = params.balance_levels()?;
        let (c1_sec5, c2_sec5, h_envelope) = params.global_envelope(eta_max, horizon)?;
        let worst_start = model
            .potential(support.omega_lo)?
            .max(model.potential(support.omega_hi)?);
        let potential_level = c * horizon * h_envelope + worst_start + 0.5 * eta_max * eta_max;
        let omega_confinement = invert_both(model, potential_level)?;

        let reach = support.max_abs_v() * horizon + 0.5 * field_sup * horizon * horizon;
        let certified_box = SupportBox {
            x_lo: support.x_lo - reach,
            x_hi: support.x_hi + reach,
            v_lo: support.v_lo - field_sup * horizon,
            v_hi: support.v_hi + field_sup * horizon,
            omega_lo: omega_confinement.0,
            omega_hi: omega_confinement.1,
            eta_lo: -h_envelope,
            eta_hi: h_envelope,
        };
        Ok(Self {
            epsilon: eps,
            epsilon0,
            r,
            c_minus: field_sup,
            c,
            c_raised,
            mass,
            horizon,
            c1,
            c2,
            t0,
            balance,
            i_min,
            i_max,
            c1_sec5,
            c2_sec5,
            eta_max,
            h_envelope,
            potential_level,
            omega_confinement,
            initial_box: *support,
            certified_box,
            slack: DEFAULT_SLACK,
        })
    }

    pub fn params(&self, model: &HookeModel) -> Result<BoundParameters, BoundsError> {
        BoundParameters::new(model.clone(), self.epsilon0, self.r, self.c_minus, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    FieldSup,
    ChaoticBound,
    ExcursionEnvelope,
    GlobalEnvelope,
    OmegaConfinement,
    WorkBound,
    TranslationBox,
}

impl CheckKind {
    pub const ALL: [CheckKind; 7] = [
        CheckKind::FieldSup,
        CheckKind::ChaoticBound,
        CheckKind::ExcursionEnvelope,
        CheckKind::GlobalEnvelope,
        CheckKind::OmegaConfinement,
        CheckKind::WorkBound,
        CheckKind::TranslationBox,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub checked: usize,
    pub violations: usize,
    /// Sample (or step, for the field and work checks) index of the first violation.
    pub first_violation: Option<usize>,
    /// Smallest `bound − value` seen, clamped to finite values; `None` when nothing was checked.
    pub min_margin: Option<f64>,
}

impl CheckResult {
    fn new(kind: CheckKind) -> Self {
        Self {
            kind,
            checked: 0,
            violations: 0,
            first_violation: None,
            min_margin: None,
        }
    }

    fn record(&mut self, index: usize, bound: f64, value: f64, slack: f64) {
        self.checked += 1;
        let raw = bound - value;
        let margin = if raw.is_nan() {
            f64::MIN
        } else {
            raw.clamp(f64::MIN, f64::MAX)
        };
        if self.min_margin.is_none_or(|m| margin < m) {
            self.min_margin = Some(margin);
        }
        if !(raw >= -slack) {
            self.violations += 1;
            self.first_violation.get_or_insert(index);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl CertReport {
    pub fn check(&self, kind: CheckKind) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.kind == kind)
            .expect("every kind is reported")
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed())
    }
}

/// Holds one path against every certificate inequality, each with slack `cert.slack`.
pub fn certify(
    path: &TrajectoryPath,
    cert: &BoundCertificate,
    events: &[OscillationEvent],
    model: &HookeModel,
) -> CertReport {
    let slack = cert.slack;
    let b = &cert.balance;
    let mut checks: Vec<CheckResult> = CheckKind::ALL
        .iter()
        .map(|k| CheckResult::new(*k))
        .collect();
    let idx = |k: CheckKind| CheckKind::ALL.iter().position(|q| *q == k).unwrap();

    for (k, s) in path.steps.iter().enumerate() {
        checks[idx(CheckKind::FieldSup)].record(k, cert.c, s.sup_pm, slack);
    }

    let t_start = path.times[0];
    let n = path.len();
    for i in 0..n {
        let z = path.states[i];
        let h = z[3].abs();
        checks[idx(CheckKind::GlobalEnvelope)].record(i, cert.h_envelope, h, slack);
        let u = model.potential(z[2]).unwrap_or(f64::INFINITY);
        checks[idx(CheckKind::OmegaConfinement)].record(
            i,
            cert.potential_level,
            u,
            slack.max(1e-12 * cert.potential_level),
        );
        let bx = &cert.certified_box;
        let dx = (bx.x_lo - z[0])
            .max(z[0] - bx.x_hi)
            .max(bx.v_lo - z[1])
            .max(z[1] - bx.v_hi);
        checks[idx(CheckKind::TranslationBox)].record(i, 0.0, dx, slack);
    }

    // chaotic stretches: start at the path start or at a return into the region
    let mut entry: Option<(f64, f64)> = if b.contains_open(path.states[0][2]) {
        Some((t_start, path.states[0][3]))
    } else {
        None
    };
    let mut ev = events.iter().peekable();
    for i in 0..n {
        let t = path.times[i];
        while let Some(e) = ev.peek() {
            if e.time > t {
                break;
            }
            match e.kind {
                EventKind::Return(_) => entry = Some((e.time, e.state[3])),
                EventKind::Exit(_) => entry = None,
                EventKind::Stopping => {}
            }
            ev.next();
        }
        let z = path.states[i];
        if let Some((t1, h1)) = entry {
            if b.contains_open(z[2]) {
                checks[idx(CheckKind::ChaoticBound)].record(
                    i,
                    chaotic_bound(h1, t - t1, cert.c),
                    z[3].abs(),
                    slack,
                );
            }
        }
    }

    // excursions: from each exit to the next return (or the path end)
    let env = |h1: f64| (h1 * h1 + 4.0 * cert.epsilon * cert.c).sqrt();
    let mut k = 0;
    while k < events.len() {
        if let EventKind::Exit(side) = events[k].kind {
            let (t1, h1) = (events[k].time, events[k].state[3]);
            let t_r = events[k + 1..]
                .iter()
                .find(|e| e.kind == EventKind::Return(side))
                .map(|e| e.time)
                .unwrap_or(f64::INFINITY);
            for i in 0..n {
                let t = path.times[i];
                if t > t1 && t < t_r {
                    checks[idx(CheckKind::ExcursionEnvelope)].record(
                        i,
                        env(h1),
                        path.states[i][3].abs(),
                        slack,
                    );
                }
            }
        }
        k += 1;
    }

    // work of F⁻ on every stretch where H keeps one sign
    let bound = cert.c * cert.epsilon;
    let mut work = 0.0;
    let mut seg_start = 0;
    for (k, s) in path.steps.iter().enumerate() {
        let (ha, hb) = (path.states[k][3], path.states[k + 1][3]);
        let dt = s.t1 - s.t0;
        if ha * hb < 0.0 {
            // close the segment at the linear zero of H, where the integrand vanishes
            let theta = ha / (ha - hb);
            work += 0.5 * theta * dt * ha * s.fm0;
            checks[idx(CheckKind::WorkBound)].record(seg_start, bound, work.abs(), slack);
            work = 0.5 * (1.0 - theta) * dt * hb * s.fm1;
            seg_start = k;
        } else {
            work += 0.5 * dt * (ha * s.fm0 + hb * s.fm1);
        }
    }
    if !path.steps.is_empty() {
        checks[idx(CheckKind::WorkBound)].record(seg_start, bound, work.abs(), slack);
    }

    CertReport {
        passed: checks.iter().all(|c| c.passed()),
        checks,
    }
}
