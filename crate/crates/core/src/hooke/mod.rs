//! The singular bonding force `F^h` on `(0, ε)`, its potential and the
//! balance points where the bond force matches a given field strength.
//!
//! The potential used throughout the crate is
//!
//! ```text
//! U(x) = ∫_x^{ε/2} F^h(y) dy      (x ∈ (0, ε))
//! ```
//!
//! which is nonnegative on the whole domain and zero at the midpoint. The
//! right half of `U` is usually called `h_M`, the left half `h_m`; both are
//! monotone and can be inverted branch by branch.

mod quadrature;
mod table;

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use quadrature::integrate;
pub use table::MonotoneCubic;

/// Evaluations closer than `GUARD_REL · ε` to a wall are rejected.
pub const GUARD_REL: f64 = 1e-9;
/// Bisection tolerance relative to ε, tightened to the wall distance near a wall.
pub const ROOT_TOL_REL: f64 = 1e-12;
/// Target relative accuracy of the adaptive potential quadrature.
pub const QUAD_REL_TOL: f64 = 1e-10;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HookeError {
    #[error("bond length {omega} outside the admissible band ({lo}, {hi})")]
    Domain { omega: f64, lo: f64, hi: f64 },
    #[error("invalid bond domain ε = {0}")]
    Epsilon(f64),
    #[error("adaptive quadrature failed to converge on [{from}, {to}]")]
    Quadrature { from: f64, to: f64 },
    #[error("potential level {value} exceeds the {branch:?} branch supremum {sup}")]
    Range {
        value: f64,
        branch: Branch,
        sup: f64,
    },
    #[error("bisection could not bracket a root: {0}")]
    Tolerance(String),
    #[error("force table: {0}")]
    Table(String),
    #[error("io: {0}")]
    Io(String),
}

/// Which half of the bond domain an inverse lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `(0, ε/2]`
    Left,
    /// `[ε/2, ε)`
    Right,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied bonding force together with its derivative.
#[derive(Clone)]
pub struct CustomForce {
    name: String,
    force: ScalarFn,
    derivative: ScalarFn,
}

impl fmt::Debug for CustomForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomForce")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum HookeKind {
    /// `F^h(ω) = −tan(π/ε · (ω − ε/2))`
    Tangent,
    Custom(CustomForce),
}

#[derive(Debug, Clone)]
pub struct HookeModel {
    epsilon: f64,
    kind: HookeKind,
}

/// Separations where the bond force equals `±level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BalancePoints {
    /// `Ω_m ∈ (0, ε/2)` with `F^h(Ω_m) = level`
    pub omega_min: f64,
    /// `Ω_M ∈ (ε/2, ε)` with `F^h(Ω_M) = −level`
    pub omega_max: f64,
    pub level: f64,
}

impl BalancePoints {
    pub fn contains_open(&self, omega: f64) -> bool {
        omega > self.omega_min && omega < self.omega_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    /// strictly decreasing
    Monotone,
    /// zero at the midpoint
    MidpointZero,
    /// odd about the midpoint
    OddSymmetry,
    /// convex on the left half, concave on the right half
    Convexity,
    /// every sample finite
    Finite,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub hypothesis: Hypothesis,
    pub omega: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Distinct failed hypotheses in first-seen order.
    pub fn failed(&self) -> Vec<Hypothesis> {
        let mut out: Vec<Hypothesis> = Vec::new();
        for v in &self.violations {
            if !out.contains(&v.hypothesis) {
                out.push(v.hypothesis);
            }
        }
        out
    }
}

impl HookeModel {
    pub fn tangent(epsilon: f64) -> Result<Self, HookeError> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            kind: HookeKind::Tangent,
        })
    }

    pub fn custom<F, D>(
        epsilon: f64,
        name: impl Into<String>,
        force: F,
        derivative: D,
    ) -> Result<Self, HookeError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            kind: HookeKind::Custom(CustomForce {
                name: name.into(),
                force: Arc::new(force),
                derivative: Arc::new(derivative),
            }),
        })
    }

    /// Builds a model from a two-column `omega force` table.
    pub fn from_table_str(epsilon: f64, text: &str) -> Result<Self, HookeError> {
        let interp = Arc::new(MonotoneCubic::parse(text)?);
        let (lo, hi) = interp.domain();
        if lo <= 0.0 || hi >= epsilon {
            return Err(HookeError::Table(format!(
                "table range [{lo}, {hi}] must lie inside (0, {epsilon})"
            )));
        }
        let d = Arc::clone(&interp);
        Self::custom(
            epsilon,
            "table",
            move |w| interp.eval(w),
            move |w| d.derivative(w),
        )
    }

    pub fn from_table_file(epsilon: f64, path: &Path) -> Result<Self, HookeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HookeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_table_str(epsilon, &text)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kind(&self) -> &HookeKind {
        &self.kind
    }

    pub fn name(&self) -> &str {
        match &self.kind {
            HookeKind::Tangent => "tangent",
            HookeKind::Custom(c) => &c.name,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * self.epsilon
    }

    /// Width of the rejected band at each wall.
    pub fn guard(&self) -> f64 {
        GUARD_REL * self.epsilon
    }

    pub fn root_tolerance(&self) -> f64 {
        ROOT_TOL_REL * self.epsilon
    }

    pub fn in_domain(&self, omega: f64) -> bool {
        let g = self.guard();
        omega >= g && omega <= self.epsilon - g
    }

    fn check(&self, omega: f64) -> Result<(), HookeError> {
        if self.in_domain(omega) {
            Ok(())
        } else {
            Err(HookeError::Domain {
                omega,
                lo: self.guard(),
                hi: self.epsilon - self.guard(),
            })
        }
    }

    pub fn force(&self, omega: f64) -> Result<f64, HookeError> {
        self.check(omega)?;
        Ok(self.force_unchecked(omega))
    }

    /// Force without the domain guard; callers must have checked `omega`.
    #[inline]
    pub fn force_unchecked(&self, omega: f64) -> f64 {
        match &self.kind {
            HookeKind::Tangent => -(PI / self.epsilon * (omega - self.epsilon / 2.0)).tan(),
            HookeKind::Custom(c) => (c.force)(omega),
        }
    }

    pub fn derivative(&self, omega: f64) -> Result<f64, HookeError> {
        self.check(omega)?;
        Ok(match &self.kind {
            HookeKind::Tangent => {
                let t = (PI / self.epsilon * (omega - self.epsilon / 2.0)).tan();
                -(PI / self.epsilon) * (1.0 + t * t)
            }
            HookeKind::Custom(c) => (c.derivative)(omega),
        })
    }

    /// `U(x) = ∫_x^{ε/2} F^h(y) dy`.
    pub fn potential(&self, x: f64) -> Result<f64, HookeError> {
        self.check(x)?;
        match &self.kind {
            HookeKind::Tangent => Ok(tangent_potential(self.epsilon, x)),
            HookeKind::Custom(c) => {
                let mid = self.midpoint();
                let f = &c.force;
                integrate(|y| f(y), x, mid, QUAD_REL_TOL, 1e-300)
                    .ok_or(HookeError::Quadrature { from: x, to: mid })
            }
        }
    }

    /// Supremum of `U` reachable inside the guard band on one branch.
    pub fn branch_supremum(&self, branch: Branch) -> Result<f64, HookeError> {
        match &self.kind {
            HookeKind::Tangent => Ok(f64::INFINITY),
            HookeKind::Custom(_) => self.potential(self.branch_wall(branch)),
        }
    }

    fn branch_wall(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Left => self.guard(),
            Branch::Right => self.epsilon - self.guard(),
        }
    }

    /// Inverse of `U` on one branch: `Right` gives `h_M⁻¹`, `Left` gives `h_m⁻¹`.
    ///
    /// The tangent model is inverted in closed form, which stays accurate
    /// for levels whose preimage lies inside the wall guard band. Other
    /// models are inverted by bisection.
    pub fn inverse_potential(&self, value: f64, branch: Branch) -> Result<f64, HookeError> {
        if !(value >= 0.0) || value.is_nan() {
            return Err(HookeError::Range {
                value,
                branch,
                sup: f64::INFINITY,
            });
        }
        match &self.kind {
            HookeKind::Tangent => Ok(tangent_inverse(self.epsilon, value, branch)),
            HookeKind::Custom(_) => self.inverse_potential_bisection(value, branch),
        }
    }

    /// Bracketing bisection for the potential inverse, valid for every model.
    pub fn inverse_potential_bisection(
        &self,
        value: f64,
        branch: Branch,
    ) -> Result<f64, HookeError> {
        if !(value >= 0.0) {
            return Err(HookeError::Range {
                value,
                branch,
                sup: f64::INFINITY,
            });
        }
        let mid = self.midpoint();
        let wall = self.branch_wall(branch);
        let sup = self.potential(wall)?;
        if value > sup {
            return Err(HookeError::Range { value, branch, sup });
        }
        // U increases from the midpoint towards the wall on both branches
        let (mut near, mut far) = (mid, wall);
        let tol = self.root_tolerance();
        for _ in 0..MAX_BISECTIONS {
            let probe = 0.5 * (near + far);
            // U is steep near a wall; resolve ω relative to the wall distance there
            let width = tol.min(ROOT_TOL_REL * (probe - wall).abs());
            if (far - near).abs() <= width || probe == near || probe == far {
                return Ok(probe);
            }
            if self.potential(probe)? < value {
                near = probe;
            } else {
                far = probe;
            }
        }
        Err(HookeError::Tolerance(format!(
            "inverse potential for level {value} did not reach tolerance {tol}"
        )))
    }

    /// Unique `(Ω_m, Ω_M)` with `F^h(Ω_m) = level`, `F^h(Ω_M) = −level`.
    pub fn balance_points(&self, level: f64) -> Result<BalancePoints, HookeError> {
        if !(level > 0.0) || !level.is_finite() {
            return Err(HookeError::Tolerance(format!(
                "balance level must be positive and finite, got {level}"
            )));
        }
        let mid = self.midpoint();
        let omega_min = self.bisect_force(level, self.guard(), mid)?;
        let omega_max = self.bisect_force(-level, mid, self.epsilon - self.guard())?;
        Ok(BalancePoints {
            omega_min,
            omega_max,
            level,
        })
    }

    /// Root of `F^h(ω) = target` on `[lo, hi]`, using that `F^h` decreases.
    fn bisect_force(&self, target: f64, lo: f64, hi: f64) -> Result<f64, HookeError> {
        let g = |w: f64| self.force_unchecked(w) - target;
        let (mut a, mut b) = (lo, hi);
        let (ga, gb) = (g(a), g(b));
        if !(ga >= 0.0 && gb <= 0.0) {
            return Err(HookeError::Tolerance(format!(
                "F^h - {target} does not change sign on [{lo}, {hi}] (values {ga}, {gb})"
            )));
        }
        let tol = self.root_tolerance();
        for _ in 0..MAX_BISECTIONS {
            if b - a <= tol {
                return Ok(0.5 * (a + b));
            }
            let m = 0.5 * (a + b);
            if g(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Err(HookeError::Tolerance(format!(
            "force level {target} not resolved"
        )))
    }

    /// Samples `F^h` on an interior grid symmetric about `ε/2` and reports
    /// every violated structural hypothesis.
    pub fn validate(&self, grid_size: usize) -> ValidationReport {
        let n = grid_size.max(8);
        let eps = self.epsilon;
        let omegas: Vec<f64> = (0..n)
            .map(|i| eps * (i as f64 + 1.0) / (n as f64 + 1.0))
            .collect();
        let values: Vec<f64> = omegas.iter().map(|&w| self.force_unchecked(w)).collect();
        let mut violations = Vec::new();

        for (w, v) in omegas.iter().zip(&values) {
            if !v.is_finite() {
                violations.push(Violation {
                    hypothesis: Hypothesis::Finite,
                    omega: *w,
                    detail: format!("F^h = {v}"),
                });
            }
        }
        if !violations.is_empty() {
            return ValidationReport {
                grid_size: n,
                violations,
            };
        }
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        let rel = 1e-9;

        for i in 0..n - 1 {
            if !(values[i + 1] < values[i]) {
                violations.push(Violation {
                    hypothesis: Hypothesis::Monotone,
                    omega: omegas[i],
                    detail: format!(
                        "F^h({}) = {} ≥ F^h({}) = {}",
                        omegas[i + 1],
                        values[i + 1],
                        omegas[i],
                        values[i]
                    ),
                });
            }
        }

        let mid = self.force_unchecked(self.midpoint());
        let mid_scale = values[0].abs().min(values[n - 1].abs()).max(1.0);
        if mid.abs() > rel * mid_scale {
            violations.push(Violation {
                hypothesis: Hypothesis::MidpointZero,
                omega: self.midpoint(),
                detail: format!("F^h(ε/2) = {mid}"),
            });
        }

        for i in 0..n / 2 {
            let j = n - 1 - i;
            let sum = values[i] + values[j];
            let tol = rel * (values[i].abs() + values[j].abs()).max(1.0);
            if sum.abs() > tol {
                violations.push(Violation {
                    hypothesis: Hypothesis::OddSymmetry,
                    omega: omegas[i],
                    detail: format!("F^h({}) + F^h({}) = {sum}", omegas[i], omegas[j]),
                });
            }
        }

        let half = self.midpoint();
        for i in 1..n - 1 {
            let (a, b, c) = (omegas[i - 1], omegas[i], omegas[i + 1]);
            let d2 = values[i - 1] - 2.0 * values[i] + values[i + 1];
            let tol = rel
                * (values[i - 1].abs() + 2.0 * values[i].abs() + values[i + 1].abs()).max(1e-300);
            let bad = if c <= half {
                d2 < -tol
            } else if a >= half {
                d2 > tol
            } else {
                false
            };
            if bad {
                violations.push(Violation {
                    hypothesis: Hypothesis::Convexity,
                    omega: b,
                    detail: format!("second difference {d2} has the wrong sign"),
                });
            }
        }
        let _ = scale;
        ValidationReport {
            grid_size: n,
            violations,
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), HookeError> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(HookeError::Epsilon(epsilon))
    }
}

/// `−(ε/π) ln cos(π(x − ε/2)/ε)`, written to keep relative accuracy near
/// the midpoint and near the walls.
fn tangent_potential(eps: f64, x: f64) -> f64 {
    let wall_dist = x.min(eps - x);
    if wall_dist < 0.25 * eps {
        // cos(π(x − ε/2)/ε) = sin(π d/ε) with d the distance to the nearer wall
        -(eps / PI) * (PI * wall_dist / eps).sin().ln()
    } else {
        let u = PI * (x - 0.5 * eps) / eps;
        let s = (0.5 * u).sin();
        -(eps / PI) * libm::log1p(-2.0 * s * s)
    }
}

fn tangent_inverse(eps: f64, value: f64, branch: Branch) -> f64 {
    // cos(u) = exp(−π value/ε) with u = π(x − ε/2)/ε
    let a = PI * value / eps;
    let c = (-a).exp();
    if c < 0.7 {
        // distance to the wall: sin(π d/ε) = c
        let d = eps / PI * c.asin();
        match branch {
            Branch::Left => d,
            Branch::Right => eps - d,
        }
    } else {
        // 1 − cos u = 2 sin²(u/2)
        let one_minus = -libm::expm1(-a);
        let offset = 2.0 * eps / PI * (0.5 * one_minus).sqrt().asin();
        match branch {
            Branch::Left => 0.5 * eps - offset,
            Branch::Right => 0.5 * eps + offset,
        }
    }
}
