//! Weighted-particle ensembles and the self-consistent step field.
//!
//! Every molecule of phase-space mass `w` carries `2w` of atomic mass, so
//! the field of an ensemble with `Σw = m` has total mass `M = 2m` and
//!
//! ```text
//! F(x) = ½ (M_right(x) − M_left(x))
//! ```
//!
//! A particle sitting exactly at `x` contributes half of its mass to each
//! side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Chunk length of the deterministic parallel reductions.
pub const REDUCE_CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("ensemble has no particles")]
    EmptyEnsemble,
    #[error("particle {index}: {reason}")]
    InvalidParticle { index: usize, reason: String },
    #[error("bond length {0} must be positive and finite")]
    Domain(f64),
    #[error("cell volume {0} must be positive and finite")]
    CellVolume(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub x: f64,
    pub v: f64,
    pub omega: f64,
    pub eta: f64,
    pub w: f64,
}

impl ParticleState {
    pub fn new(x: f64, v: f64, omega: f64, eta: f64, w: f64) -> Self {
        Self {
            x,
            v,
            omega,
            eta,
            w,
        }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x, self.v, self.omega, self.eta]
    }

    pub fn with_coords(&self, z: [f64; 4]) -> Self {
        Self {
            x: z[0],
            v: z[1],
            omega: z[2],
            eta: z[3],
            w: self.w,
        }
    }
}

/// Axis-aligned box in `(x, v, ω, η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub x_lo: f64,
    pub x_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
}

impl SupportBox {
    pub fn point(p: &ParticleState) -> Self {
        Self {
            x_lo: p.x,
            x_hi: p.x,
            v_lo: p.v,
            v_hi: p.v,
            omega_lo: p.omega,
            omega_hi: p.omega,
            eta_lo: p.eta,
            eta_hi: p.eta,
        }
    }

    pub fn from_bounds(lo: [f64; 4], hi: [f64; 4]) -> Self {
        Self {
            x_lo: lo[0],
            x_hi: hi[0],
            v_lo: lo[1],
            v_hi: hi[1],
            omega_lo: lo[2],
            omega_hi: hi[2],
            eta_lo: lo[3],
            eta_hi: hi[3],
        }
    }

    pub fn lo(&self) -> [f64; 4] {
        [self.x_lo, self.v_lo, self.omega_lo, self.eta_lo]
    }

    pub fn hi(&self) -> [f64; 4] {
        [self.x_hi, self.v_hi, self.omega_hi, self.eta_hi]
    }

    /// Componentwise hull of all particles; `None` for an empty slice.
    pub fn of(particles: &[ParticleState]) -> Option<Self> {
        let first = particles.first()?;
        let hull = particles
            .par_chunks(REDUCE_CHUNK)
            .map(|c| {
                c.iter()
                    .fold(Self::point(&c[0]), |b, p| b.union(&Self::point(p)))
            })
            .collect::<Vec<_>>();
        Some(hull.iter().fold(Self::point(first), |a, b| a.union(b)))
    }

    pub fn union(&self, o: &Self) -> Self {
        Self {
            x_lo: self.x_lo.min(o.x_lo),
            x_hi: self.x_hi.max(o.x_hi),
            v_lo: self.v_lo.min(o.v_lo),
            v_hi: self.v_hi.max(o.v_hi),
            omega_lo: self.omega_lo.min(o.omega_lo),
            omega_hi: self.omega_hi.max(o.omega_hi),
            eta_lo: self.eta_lo.min(o.eta_lo),
            eta_hi: self.eta_hi.max(o.eta_hi),
        }
    }

    pub fn contains(&self, p: &ParticleState) -> bool {
        self.contains_box(&Self::point(p))
    }

    pub fn contains_box(&self, o: &Self) -> bool {
        let (a, b) = (self.lo(), self.hi());
        let (c, d) = (o.lo(), o.hi());
        (0..4).all(|i| a[i] <= c[i] && d[i] <= b[i])
    }

    /// Box grown by `frac` of its width on every side (at least `floor`).
    pub fn enlarged(&self, frac: f64, floor: f64) -> Self {
        let (mut lo, mut hi) = (self.lo(), self.hi());
        for i in 0..4 {
            let pad = ((hi[i] - lo[i]) * frac).max(floor);
            lo[i] -= pad;
            hi[i] += pad;
        }
        Self::from_bounds(lo, hi)
    }

    pub fn max_abs_v(&self) -> f64 {
        self.v_lo.abs().max(self.v_hi.abs())
    }

    pub fn max_abs_eta(&self) -> f64 {
        self.eta_lo.abs().max(self.eta_hi.abs())
    }

    pub fn max_abs_x(&self) -> f64 {
        self.x_lo.abs().max(self.x_hi.abs())
    }
}

/// Weighted particles representing `f(t, ·)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub particles: Vec<ParticleState>,
    pub time: f64,
    pub support: SupportBox,
    /// Phase-space volume per particle; `w / cell_volume` is the carried value of `f`.
    pub cell_volume: f64,
}

impl Ensemble {
    pub fn new(
        particles: Vec<ParticleState>,
        time: f64,
        cell_volume: f64,
    ) -> Result<Self, FieldError> {
        if !(cell_volume > 0.0 && cell_volume.is_finite()) {
            return Err(FieldError::CellVolume(cell_volume));
        }
        for (index, p) in particles.iter().enumerate() {
            if !p.coords().iter().all(|c| c.is_finite()) {
                return Err(FieldError::InvalidParticle {
                    index,
                    reason: "non-finite coordinate".into(),
                });
            }
            if !(p.w >= 0.0 && p.w.is_finite()) {
                return Err(FieldError::InvalidParticle {
                    index,
                    reason: format!("weight {} must be finite and nonnegative", p.w),
                });
            }
        }
        let support = SupportBox::of(&particles).ok_or(FieldError::EmptyEnsemble)?;
        Ok(Self {
            particles,
            time,
            support,
            cell_volume,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// `Σw`, summed in a fixed chunk order.
    pub fn mass(&self) -> f64 {
        ordered_sum(&self.particles, |p| p.w)
    }

    /// Largest carried value `w / cell_volume`.
    pub fn linf(&self) -> f64 {
        self.particles.iter().fold(0.0_f64, |m, p| m.max(p.w)) / self.cell_volume
    }

    /// Replaces the particle coordinates and refreshes the support box.
    pub fn moved_to(&self, particles: Vec<ParticleState>, time: f64) -> Result<Self, FieldError> {
        Self::new(particles, time, self.cell_volume)
    }
}

/// Sum over `items` with a result independent of the thread count.
pub fn ordered_sum<T: Sync, F: Fn(&T) -> f64 + Sync>(items: &[T], f: F) -> f64 {
    let partial: Vec<f64> = items
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().map(&f).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Frozen step field at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSnapshot {
    positions: Vec<f64>,
    /// `cum[k]` is the atomic mass of the first `k` sorted molecules.
    cum: Vec<f64>,
    time: f64,
}

impl FieldSnapshot {
    pub fn build(ensemble: &Ensemble) -> Result<Self, FieldError> {
        Self::from_particles(&ensemble.particles, ensemble.time)
    }

    pub fn from_particles(particles: &[ParticleState], time: f64) -> Result<Self, FieldError> {
        if particles.is_empty() {
            return Err(FieldError::EmptyEnsemble);
        }
        let mut pairs: Vec<(f64, f64)> = particles.par_iter().map(|p| (p.x, 2.0 * p.w)).collect();
        pairs.par_sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = Vec::with_capacity(pairs.len() + 1);
        let mut acc = 0.0;
        cum.push(acc);
        for &(_, m) in &pairs {
            acc += m;
            cum.push(acc);
        }
        Ok(Self {
            positions: pairs.into_iter().map(|p| p.0).collect(),
            cum,
            time,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Prefix sums of atomic mass; one entry longer than `positions`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    /// `M = 2Σw`.
    pub fn total_mass(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// Atomic mass left of `x`, counting particles at `x` half.
    pub fn mass_left(&self, x: f64) -> f64 {
        let lo = self.positions.partition_point(|&p| p < x);
        let hi = self.positions.partition_point(|&p| p <= x);
        0.5 * (self.cum[lo] + self.cum[hi])
    }

    pub fn field_at(&self, x: f64) -> f64 {
        let left = self.mass_left(x);
        0.5 * ((self.total_mass() - left) - left)
    }

    /// `(F(x+ω) + F(x−ω), F(x+ω) − F(x−ω))`.
    pub fn field_pm(&self, x: f64, omega: f64) -> Result<(f64, f64), FieldError> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(FieldError::Domain(omega));
        }
        Ok(self.pm_unchecked(x, omega))
    }

    #[inline]
    pub fn pm_unchecked(&self, x: f64, omega: f64) -> (f64, f64) {
        let r = self.field_at(x + omega);
        let l = self.field_at(x - omega);
        (r + l, r - l)
    }

    /// `(sup|F|, sup|F±|) = (M/2, M)`.
    pub fn norms(&self) -> (f64, f64) {
        let m = self.total_mass();
        (0.5 * m, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, w: f64) -> ParticleState {
        ParticleState::new(x, 0.0, 0.5, 0.0, w)
    }

    fn snap(ps: &[ParticleState]) -> FieldSnapshot {
        FieldSnapshot::from_particles(ps, 0.0).unwrap()
    }

    /// Step-field oracle: direct half-difference of atomic masses.
    fn brute(ps: &[ParticleState], x: f64) -> f64 {
        let right: f64 = ps.iter().filter(|q| q.x > x).map(|q| 2.0 * q.w).sum();
        let left: f64 = ps.iter().filter(|q| q.x < x).map(|q| 2.0 * q.w).sum();
        let on: f64 = ps.iter().filter(|q| q.x == x).map(|q| 2.0 * q.w).sum();
        0.5 * ((right + 0.5 * on) - (left + 0.5 * on))
    }

    #[test]
    fn single_molecule() {
        let s = snap(&[p(0.3, 0.5)]);
        assert_eq!(s.total_mass(), 1.0);
        assert_eq!(s.field_at(0.0), 0.5);
        assert_eq!(s.field_at(1.0), -0.5);
        assert_eq!(s.field_at(0.3), 0.0);
        let (_, fm) = s.field_pm(0.3, 0.01).unwrap();
        assert_eq!(fm, -1.0);
    }

    #[test]
    fn symmetric_pair() {
        let s = snap(&[p(-1.0, 0.5), p(1.0, 0.5)]);
        assert_eq!(s.total_mass(), 2.0);
        assert_eq!(s.field_at(0.0), 0.0);
        for w in [0.1, 0.5, 1.0, 2.5] {
            assert_eq!(s.field_pm(0.0, w).unwrap().0, 0.0);
        }
        assert_eq!(s.field_pm(-10.0, 0.3).unwrap(), (2.0, 0.0));
        assert_eq!(s.field_at(-1e300), 1.0);
        assert_eq!(s.field_at(1e300), -1.0);
        assert_eq!(s.norms(), (1.0, 2.0));
    }

    #[test]
    fn norms_scale_with_mass() {
        assert_eq!(snap(&[p(0.0, 0.0)]).norms(), (0.0, 0.0));
        assert_eq!(snap(&[p(0.0, 1.0), p(2.0, 1.0)]).norms(), (2.0, 4.0));
    }

    #[test]
    fn empty_is_rejected() {
        assert_eq!(
            FieldSnapshot::from_particles(&[], 0.0).unwrap_err(),
            FieldError::EmptyEnsemble
        );
        assert!(Ensemble::new(vec![], 0.0, 1.0).is_err());
        assert!(Ensemble::new(vec![p(0.0, -1.0)], 0.0, 1.0).is_err());
        assert!(snap(&[p(0.0, 1.0)]).field_pm(0.0, 0.0).is_err());
    }

    #[test]
    fn coincident_particles_split_evenly() {
        let s = snap(&[p(0.0, 0.25), p(0.0, 0.75), p(1.0, 0.5)]);
        assert_eq!(s.field_at(0.0), 0.5 * ((1.0 + 1.0) - 1.0));
        assert_eq!(
            s.field_at(0.0),
            brute(&[p(0.0, 0.25), p(0.0, 0.75), p(1.0, 0.5)], 0.0)
        );
    }

    #[test]
    fn support_box_and_mass() {
        let e = Ensemble::new(
            vec![
                ParticleState::new(1.0, -2.0, 0.4, 0.1, 0.5),
                ParticleState::new(-1.0, 3.0, 0.6, -0.2, 0.25),
            ],
            0.0,
            0.5,
        )
        .unwrap();
        assert_eq!(e.support.lo(), [-1.0, -2.0, 0.4, -0.2]);
        assert_eq!(e.support.hi(), [1.0, 3.0, 0.6, 0.1]);
        assert_eq!(e.mass(), 0.75);
        assert_eq!(e.linf(), 1.0);
        assert!(e.particles.iter().all(|q| e.support.contains(q)));
    }

    fn ensemble_strategy() -> impl Strategy<Value = Vec<ParticleState>> {
        prop::collection::vec((-5.0f64..5.0, 0.0f64..1.0), 1..200)
            .prop_map(|v| v.into_iter().map(|(x, w)| p(x, w)).collect())
    }

    proptest! {
        #[test]
        fn nonincreasing_and_bounded(ps in ensemble_strategy(), mut qs in prop::collection::vec(-6.0f64..6.0, 1..100)) {
            let s = snap(&ps);
            qs.sort_by(f64::total_cmp);
            let half = 0.5 * s.total_mass();
            let mut prev = f64::INFINITY;
            for q in qs {
                let f = s.field_at(q);
                prop_assert!(f <= prev);
                prop_assert!(f.abs() <= half * (1.0 + 1e-15));
                let (fp, fm) = s.pm_unchecked(q, 0.3);
                prop_assert!(fp.abs() <= s.total_mass() * (1.0 + 1e-15));
                prop_assert!(fm.abs() <= s.total_mass() * (1.0 + 1e-15));
                prev = f;
            }
        }

        #[test]
        fn telescoping(ps in ensemble_strategy(), a in -6.0f64..6.0, b in -6.0f64..6.0) {
            let (x, y) = if a < b { (a, b) } else { (b, a) };
            let s = snap(&ps);
            let between: f64 = ps.iter().map(|q| {
                let m = 2.0 * q.w;
                if q.x > x && q.x < y { m } else if q.x == x || q.x == y { 0.5 * m } else { 0.0 }
            }).sum();
            let diff = s.field_at(x) - s.field_at(y);
            prop_assert!((diff - between).abs() <= 1e-12 * s.total_mass().max(1.0));
        }

        #[test]
        fn matches_brute_force(ps in ensemble_strategy(), qs in prop::collection::vec(-6.0f64..6.0, 1..50)) {
            let s = snap(&ps);
            for q in qs {
                prop_assert!((s.field_at(q) - brute(&ps, q)).abs() <= 1e-12 * s.total_mass().max(1.0));
            }
        }
    }
}
