//! Initial densities `f̊` and their particle sampling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Ensemble, FieldError, ParticleState, SupportBox};

#[derive(Debug, Error)]
pub enum DatumError {
    #[error("{0}")]
    Invalid(String),
    #[error("particle file {path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `A · Π (1 − uᵢ²)³` with `uᵢ = (zᵢ − cᵢ)/wᵢ`, zero outside the box `|uᵢ| < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: [f64; 4],
    pub width: [f64; 4],
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, z: &[f64; 4]) -> f64 {
        let mut acc = self.amplitude;
        for ((zi, c), w) in z.iter().zip(&self.center).zip(&self.width) {
            let u = (zi - c) / w;
            if u.abs() >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - u * u;
            acc *= s * s * s;
        }
        acc
    }

    pub fn support(&self) -> SupportBox {
        let lo = std::array::from_fn(|i| self.center[i] - self.width[i]);
        let hi = std::array::from_fn(|i| self.center[i] + self.width[i]);
        SupportBox::from_bounds(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    /// Sum of smooth bumps sampled on a midpoint grid of `cells` per axis.
    Bumps { bumps: Vec<Bump>, cells: [usize; 4] },
    /// Pre-sampled particles: CSV with header `x,v,omega,eta,w`.
    Particles { path: PathBuf, cell_volume: f64 },
}

impl InitialDatum {
    pub fn single_bump(
        center: [f64; 4],
        width: [f64; 4],
        amplitude: f64,
        cells: [usize; 4],
    ) -> Self {
        InitialDatum::Bumps {
            bumps: vec![Bump {
                center,
                width,
                amplitude,
            }],
            cells,
        }
    }

    /// Pointwise `f̊(z)`, available for bump data only.
    pub fn density(&self, z: &[f64; 4]) -> Option<f64> {
        match self {
            InitialDatum::Bumps { bumps, .. } => Some(bumps.iter().map(|b| b.eval(z)).sum()),
            InitialDatum::Particles { .. } => None,
        }
    }

    /// Closed hull of the support; for particle files, the particles' box.
    pub fn support(&self) -> Result<SupportBox, DatumError> {
        match self {
            InitialDatum::Bumps { bumps, .. } => {
                let first = bumps
                    .first()
                    .ok_or_else(|| DatumError::Invalid("bump list is empty".into()))?;
                Ok(bumps
                    .iter()
                    .skip(1)
                    .fold(first.support(), |b, q| b.union(&q.support())))
            }
            InitialDatum::Particles { .. } => Ok(self.sample()?.support),
        }
    }

    pub fn validate(&self, epsilon: f64) -> Result<(), DatumError> {
        if let InitialDatum::Bumps { bumps, cells } = self {
            if cells.contains(&0) {
                return Err(DatumError::Invalid(
                    "every axis needs at least one cell".into(),
                ));
            }
            for (k, b) in bumps.iter().enumerate() {
                if b.width.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(DatumError::Invalid(format!(
                        "bump {k}: widths must be positive"
                    )));
                }
                if !(b.amplitude >= 0.0 && b.amplitude.is_finite()) {
                    return Err(DatumError::Invalid(format!(
                        "bump {k}: amplitude must be nonnegative"
                    )));
                }
                if b.center.iter().any(|c| !c.is_finite()) {
                    return Err(DatumError::Invalid(format!("bump {k}: non-finite center")));
                }
            }
        }
        let s = self.support()?;
        if !(s.omega_lo > 0.0 && s.omega_hi < epsilon) {
            return Err(DatumError::Invalid(format!(
                "omega support [{}, {}] must lie strictly inside (0, {epsilon})",
                s.omega_lo, s.omega_hi
            )));
        }
        Ok(())
    }

    /// Midpoint-rule particles with `w = f̊(z) · cell volume`; zero-weight cells are dropped.
    pub fn sample(&self) -> Result<Ensemble, DatumError> {
        match self {
            InitialDatum::Bumps { cells, .. } => {
                let s = self.support()?;
                let (lo, hi) = (s.lo(), s.hi());
                let h: [f64; 4] = std::array::from_fn(|i| (hi[i] - lo[i]) / cells[i] as f64);
                let vol = h.iter().product::<f64>();
                let mid = |i: usize, k: usize| lo[i] + (k as f64 + 0.5) * h[i];
                let mut particles = Vec::new();
                for a in 0..cells[0] {
                    for b in 0..cells[1] {
                        for c in 0..cells[2] {
                            for d in 0..cells[3] {
                                let z = [mid(0, a), mid(1, b), mid(2, c), mid(3, d)];
                                let f = self.density(&z).unwrap_or(0.0);
                                if f > 0.0 {
                                    particles.push(ParticleState::new(
                                        z[0],
                                        z[1],
                                        z[2],
                                        z[3],
                                        f * vol,
                                    ));
                                }
                            }
                        }
                    }
                }
                if particles.is_empty() {
                    // a zero-mass datum still needs a representative
                    let z = [
                        mid(0, cells[0] / 2),
                        mid(1, cells[1] / 2),
                        mid(2, cells[2] / 2),
                        mid(3, cells[3] / 2),
                    ];
                    particles.push(ParticleState::new(z[0], z[1], z[2], z[3], 0.0));
                }
                Ok(Ensemble::new(particles, 0.0, vol)?)
            }
            InitialDatum::Particles { path, cell_volume } => {
                let particles = read_particles(path)?;
                Ok(Ensemble::new(particles, 0.0, *cell_volume)?)
            }
        }
    }
}

pub fn read_particles(path: &Path) -> Result<Vec<ParticleState>, DatumError> {
    let err = |reason: String| DatumError::File {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<ParticleState>() {
        out.push(row.map_err(|e| err(e.to_string()))?);
    }
    if out.is_empty() {
        return Err(err("no particles".into()));
    }
    Ok(out)
}

/// Van der Corput radical inverse of `i` in `base`.
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `i` of the 4D Halton sequence (bases 2, 3, 5, 7) mapped into `b`.
pub fn halton_point(i: u64, b: &SupportBox) -> [f64; 4] {
    const BASES: [u64; 4] = [2, 3, 5, 7];
    let (lo, hi) = (b.lo(), b.hi());
    std::array::from_fn(|k| lo[k] + (hi[k] - lo[k]) * radical_inverse(i + 1, BASES[k]))
}
