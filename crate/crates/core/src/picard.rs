//! The iterative construction of local solutions: `f₀ = f̊`, and `f_{n+1}`
//! solves the linear equation whose fields are frozen from `f_n`.
//!
//! `‖f_{n+1} − f_n‖_{L∞}` at the horizon is estimated on a fixed Halton
//! probe set by evaluating `f_{n+1}(T, z) = f̊(Z(0; T, z))` backward along
//! the characteristics of consecutive field histories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datum::{halton_point, DatumError, InitialDatum};
use crate::field::{Ensemble, FieldError, FieldSnapshot, ParticleState, SupportBox};
use crate::hooke::HookeModel;
use crate::trajectory::{flow, FieldHistory, FieldProvider, StepControl, TrajectoryError};

#[derive(Debug, Error)]
pub enum PicardError {
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Datum(#[from] DatumError),
    #[error("invalid iteration setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSettings {
    pub horizon: f64,
    /// Spacing of the stored field snapshots.
    pub dt_macro: f64,
    pub control: StepControl,
    pub n_max: usize,
    pub probes: usize,
    /// Leading Halton points skipped, to compare runs on shifted probe sets.
    pub probe_offset: u64,
    /// Iteration stops once `sup_delta` falls below this.
    pub tol: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            horizon: 0.02,
            dt_macro: 1e-3,
            control: StepControl::with_dt(1e-3),
            n_max: 8,
            probes: 4096,
            probe_offset: 0,
            tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// Probe estimate of `‖f_{n+1}(T) − f_n(T)‖_{L∞}`.
    pub sup_delta: f64,
    /// Hull of the support of `f_{n+1}` over `[0, T]`.
    pub support: SupportBox,
    /// `(sup|F_n|, sup|F_n^±|)`
    pub field_norms: (f64, f64),
    pub mass: f64,
    /// Largest value carried by the particles of `f_{n+1}`.
    pub linf: f64,
}

pub struct LinearSolution {
    pub ensemble: Ensemble,
    /// Fields of the solution at the macro times.
    pub history: FieldHistory,
    pub support_hull: SupportBox,
}

fn macro_times(horizon: f64, dt_macro: f64) -> Vec<f64> {
    let k = ((horizon / dt_macro) - 1e-9).ceil().max(1.0) as usize;
    (0..k).map(|i| (i as f64 * dt_macro).min(horizon)).collect()
}

/// Transports `f0` to `horizon` under the frozen `fields`; weights never change.
pub fn solve_linear(
    f0: &Ensemble,
    fields: &dyn FieldProvider,
    model: &HookeModel,
    horizon: f64,
    dt_macro: f64,
    control: &StepControl,
) -> Result<LinearSolution, PicardError> {
    if !(horizon > 0.0 && dt_macro > 0.0) {
        return Err(PicardError::Setup(
            "horizon and dt_macro must be positive".into(),
        ));
    }
    let times = macro_times(horizon, dt_macro);
    let mut snaps = vec![FieldSnapshot::build(f0)?];
    let mut current = f0.clone();
    let mut hull = f0.support;
    for (k, &t) in times.iter().enumerate() {
        let t_next = times.get(k + 1).copied().unwrap_or(horizon);
        let moved: Vec<ParticleState> = current
            .particles
            .par_iter()
            .map(|p| flow(p, fields, model, t, t_next, control))
            .collect::<Result<_, _>>()?;
        current = current.moved_to(moved, t_next)?;
        hull = hull.union(&current.support);
        if k + 1 < times.len() {
            snaps.push(FieldSnapshot::build(&current)?);
        }
    }
    Ok(LinearSolution {
        ensemble: current,
        history: FieldHistory::new(times, snaps, horizon)?,
        support_hull: hull,
    })
}

/// `f(T, z) = f̊(Z(0; T, z))` for the solution transported by `fields`.
pub fn evaluate<D: Fn(&[f64; 4]) -> f64>(
    density: D,
    fields: &dyn FieldProvider,
    model: &HookeModel,
    horizon: f64,
    z: &[f64; 4],
    control: &StepControl,
) -> Result<f64, PicardError> {
    let p = ParticleState::new(z[0], z[1], z[2], z[3], 0.0);
    let back = flow(&p, fields, model, horizon, 0.0, control)?;
    Ok(density(&back.coords()))
}

/// `(P^x, P^v, P^ω−, P^ω+, P^η)` as the componentwise hull of the particles.
pub fn support_bounds(ensemble: &Ensemble) -> Result<SupportBox, PicardError> {
    Ok(SupportBox::of(&ensemble.particles).ok_or(FieldError::EmptyEnsemble)?)
}

fn probe_values(
    datum: &InitialDatum,
    fields: &dyn FieldProvider,
    model: &HookeModel,
    settings: &PicardSettings,
    probes: &[[f64; 4]],
) -> Result<Vec<f64>, PicardError> {
    probes
        .par_iter()
        .map(|z| {
            // probes whose bond length is outside the guard band carry no mass
            if !model.in_domain(z[2]) {
                return Ok(0.0);
            }
            evaluate(
                |q| datum.density(q).unwrap_or(0.0),
                fields,
                model,
                settings.horizon,
                z,
                &settings.control,
            )
        })
        .collect()
}

/// Runs the iteration from `f₀ = f̊` for `n = 0..=n_max` rounds.
pub fn iterate(
    datum: &InitialDatum,
    model: &HookeModel,
    settings: &PicardSettings,
) -> Result<Vec<IterationRecord>, PicardError> {
    if datum.density(&[0.0; 4]).is_none() {
        return Err(PicardError::Setup(
            "pointwise evaluation needs a bump datum".into(),
        ));
    }
    datum.validate(model.epsilon())?;
    settings.control.validate()?;
    let f0 = datum.sample()?;
    let horizon = settings.horizon;
    let mass = f0.mass();

    // F₀ is the field of f̊ at every time
    let mut fields = FieldHistory::new(vec![0.0], vec![FieldSnapshot::build(&f0)?], horizon)?;
    let mut probes: Vec<[f64; 4]> = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    let mut out = Vec::new();

    for n in 0..=settings.n_max {
        let norms = fields.fields()[0].norms();
        let sol = solve_linear(
            &f0,
            &fields,
            model,
            horizon,
            settings.dt_macro,
            &settings.control,
        )?;
        if n == 0 {
            let b = sol.ensemble.support.enlarged(0.05, 1e-12);
            probes = (0..settings.probes as u64)
                .map(|i| halton_point(i + settings.probe_offset, &b))
                .collect();
            prev = probes
                .iter()
                .map(|z| datum.density(z).unwrap_or(0.0))
                .collect();
        }
        let values = probe_values(datum, &fields, model, settings, &probes)?;
        let sup_delta = values
            .iter()
            .zip(&prev)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        out.push(IterationRecord {
            n,
            sup_delta,
            support: sol.support_hull,
            field_norms: norms,
            mass: sol.ensemble.mass(),
            linf: sol.ensemble.linf(),
        });
        debug_assert_eq!(sol.ensemble.mass(), mass);
        if sup_delta < settings.tol {
            break;
        }
        prev = values;
        fields = sol.history;
    }
    Ok(out)
}

/// Least-squares `K` in `log δₙ ≈ log δ₁ + (n−1) log(KT) − log (n−1)!` over
/// `n = 1..=n_last`, and whether every logged `δₙ ≤ δ₁(KT)^{n−1}/(n−1)!`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionFit {
    pub k: f64,
    pub envelope_holds: bool,
    /// `δₙ / (δ₁(KT)^{n−1}/(n−1)!)` for each fitted `n`.
    pub ratios: Vec<f64>,
}

pub fn fit_contraction(
    records: &[IterationRecord],
    horizon: f64,
    n_last: usize,
) -> Option<ContractionFit> {
    let d1 = records.iter().find(|r| r.n == 1)?.sup_delta;
    if !(d1 > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.n >= 2 && r.n <= n_last && r.sup_delta > 0.0)
        .map(|r| {
            let m = (r.n - 1) as f64;
            (m, (r.sup_delta / d1).ln() + ln_factorial(r.n - 1))
        })
        .collect();
    // all later deltas vanish: the envelope holds with K = 0
    let k = if pts.is_empty() {
        0.0
    } else {
        let slope = pts.iter().map(|(m, y)| m * y).sum::<f64>()
            / pts.iter().map(|(m, _)| m * m).sum::<f64>();
        slope.exp() / horizon
    };
    let ratios: Vec<f64> = records
        .iter()
        .filter(|r| r.n >= 1 && r.n <= n_last)
        .map(|r| {
            let m = r.n - 1;
            let bound = d1 * (k * horizon).powi(m as i32) / ln_factorial(m).exp();
            if r.sup_delta == 0.0 {
                0.0
            } else {
                r.sup_delta / bound
            }
        })
        .collect();
    Some(ContractionFit {
        k,
        // points on the fitted line come back through ln/exp with a few ulps of error
        envelope_holds: ratios.iter().all(|&q| q <= 1.0 + 1e-12),
        ratios,
    })
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}
