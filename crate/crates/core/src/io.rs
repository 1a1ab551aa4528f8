//! CSV and JSON artifacts. Every float is written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundCertificate, CertReport};
use crate::field::{Ensemble, FieldSnapshot};
use crate::picard::IterationRecord;
use crate::simulator::Diagnostics;
use crate::trajectory::{EventKind, OscillationEvent, Side, StepRecord, TrajectoryPath};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Table {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self, IoError> {
        let file = File::create(path).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut t = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        t.line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
        Ok(t)
    }

    fn line(&mut self, cells: &[String]) -> Result<(), IoError> {
        writeln!(self.out, "{}", cells.join(",")).map_err(|source| IoError::Io {
            path: self.path.clone(),
            source,
        })
    }

    fn row(&mut self, values: &[f64]) -> Result<(), IoError> {
        self.line(&values.iter().map(|&v| num(v)).collect::<Vec<_>>())
    }

    fn finish(mut self) -> Result<(), IoError> {
        self.out.flush().map_err(|source| IoError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_snapshot(path: &Path, snap: &FieldSnapshot) -> Result<(), IoError> {
    let mut t = Table::create(path, &["x_sorted", "cum_mass"])?;
    for (x, c) in snap.positions().iter().zip(&snap.cumulative()[1..]) {
        t.row(&[*x, *c])?;
    }
    t.finish()
}

pub fn write_ensemble(path: &Path, ens: &Ensemble) -> Result<(), IoError> {
    let mut t = Table::create(path, &["x", "v", "omega", "eta", "w"])?;
    for p in &ens.particles {
        t.row(&[p.x, p.v, p.omega, p.eta, p.w])?;
    }
    t.finish()
}

/// Writes `<stem>.csv`, `<stem>_forces.csv`, `<stem>_steps.csv` and `<stem>_events.csv` into `dir`.
pub fn write_path(dir: &Path, stem: &str, path: &TrajectoryPath) -> Result<(), IoError> {
    let mut t = Table::create(
        &dir.join(format!("{stem}.csv")),
        &["t", "x", "v", "omega", "eta"],
    )?;
    for (time, z) in path.times.iter().zip(&path.states) {
        t.row(&[*time, z[0], z[1], z[2], z[3]])?;
    }
    t.finish()?;

    let mut t = Table::create(
        &dir.join(format!("{stem}_forces.csv")),
        &["t", "f_plus", "f_minus", "eta_rate", "sup_pm"],
    )?;
    for (i, time) in path.times.iter().enumerate() {
        if let Some((fp, fm, rate, sup)) = path.forces_at(i) {
            t.row(&[*time, fp, fm, rate, sup])?;
        }
    }
    t.finish()?;

    let mut t = Table::create(&dir.join(format!("{stem}_steps.csv")), &STEP_HEADER)?;
    for s in &path.steps {
        t.line(&[
            num(s.t0),
            num(s.t1),
            s.substeps.to_string(),
            s.depth.to_string(),
            num(s.fp0),
            num(s.fm0),
            num(s.fh0),
            num(s.fp1),
            num(s.fm1),
            num(s.fh1),
            num(s.sup_pm),
        ])?;
    }
    t.finish()?;
    write_events(&dir.join(format!("{stem}_events.csv")), &path.events)
}

const STEP_HEADER: [&str; 11] = [
    "t0", "t1", "substeps", "depth", "fp0", "fm0", "fh0", "fp1", "fm1", "fh1", "sup_pm",
];

pub fn write_events(path: &Path, events: &[OscillationEvent]) -> Result<(), IoError> {
    let mut t = Table::create(path, &["t", "kind", "omega", "eta"])?;
    for e in events {
        t.line(&[
            num(e.time),
            e.kind.label().to_string(),
            num(e.state[2]),
            num(e.state[3]),
        ])?;
    }
    t.finish()
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<String>>, IoError> {
    let err = |reason: String| IoError::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let h = r.headers().map_err(|e| err(e.to_string()))?;
    if h.iter().collect::<Vec<_>>() != header {
        return Err(err(format!("expected header {}", header.join(","))));
    }
    r.records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| err(e.to_string()))
        })
        .collect()
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T, IoError> {
    s.trim().parse().map_err(|_| IoError::Parse {
        path: path.to_path_buf(),
        reason: format!("row {line}: cannot parse {s:?}"),
    })
}

fn parse_kind(s: &str) -> Option<EventKind> {
    Some(match s {
        "exit_lower" => EventKind::Exit(Side::Lower),
        "exit_upper" => EventKind::Exit(Side::Upper),
        "stopping" => EventKind::Stopping,
        "return_lower" => EventKind::Return(Side::Lower),
        "return_upper" => EventKind::Return(Side::Upper),
        _ => return None,
    })
}

/// Inverse of `write_path`; a missing events file yields no events.
pub fn read_path(dir: &Path, stem: &str) -> Result<TrajectoryPath, IoError> {
    let file = dir.join(format!("{stem}.csv"));
    let rows = read_rows(&file, &["t", "x", "v", "omega", "eta"])?;
    let mut times = Vec::with_capacity(rows.len());
    let mut states = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        times.push(parse(&file, i, &r[0])?);
        states.push([
            parse(&file, i, &r[1])?,
            parse(&file, i, &r[2])?,
            parse(&file, i, &r[3])?,
            parse(&file, i, &r[4])?,
        ]);
    }
    if times.is_empty() {
        return Err(IoError::Parse {
            path: file,
            reason: "empty path".into(),
        });
    }

    let file = dir.join(format!("{stem}_steps.csv"));
    let mut steps = Vec::new();
    for (i, r) in read_rows(&file, &STEP_HEADER)?.iter().enumerate() {
        let f = |k: usize| parse::<f64>(&file, i, &r[k]);
        steps.push(StepRecord {
            t0: f(0)?,
            t1: f(1)?,
            substeps: parse(&file, i, &r[2])?,
            depth: parse(&file, i, &r[3])?,
            fp0: f(4)?,
            fm0: f(5)?,
            fh0: f(6)?,
            fp1: f(7)?,
            fm1: f(8)?,
            fh1: f(9)?,
            sup_pm: f(10)?,
        });
    }
    if steps.len() + 1 != times.len() {
        return Err(IoError::Parse {
            path: file,
            reason: format!("{} steps for {} samples", steps.len(), times.len()),
        });
    }

    let file = dir.join(format!("{stem}_events.csv"));
    let mut events = Vec::new();
    if file.exists() {
        let rows = read_rows(&file, &["t", "kind", "omega", "eta"])?;
        for (i, r) in rows.iter().enumerate() {
            let time: f64 = parse(&file, i, &r[0])?;
            let kind = parse_kind(r[1].trim()).ok_or_else(|| IoError::Parse {
                path: file.clone(),
                reason: format!("row {i}: unknown event kind {:?}", r[1]),
            })?;
            let step = steps
                .iter()
                .position(|s| time <= s.t0.max(s.t1))
                .unwrap_or(steps.len().saturating_sub(1));
            let z = states[step.min(states.len() - 1)];
            events.push(OscillationEvent {
                kind,
                time,
                state: [z[0], z[1], parse(&file, i, &r[2])?, parse(&file, i, &r[3])?],
                step,
            });
        }
    }
    Ok(TrajectoryPath {
        times,
        states,
        steps,
        events,
        weight: 0.0,
    })
}

pub fn write_iterations(path: &Path, records: &[IterationRecord]) -> Result<(), IoError> {
    let mut t = Table::create(
        path,
        &[
            "n",
            "sup_delta",
            "Px",
            "Pv",
            "Pomega_minus",
            "Pomega_plus",
            "Peta",
            "supF",
        ],
    )?;
    for r in records {
        let s = &r.support;
        t.line(&[
            r.n.to_string(),
            num(r.sup_delta),
            num(s.max_abs_x()),
            num(s.max_abs_v()),
            num(s.omega_lo),
            num(s.omega_hi),
            num(s.max_abs_eta()),
            num(r.field_norms.0),
        ])?;
    }
    t.finish()
}

pub const DIAGNOSTICS_HEADER: [&str; 16] = [
    "t", "L1", "Linf", "x_lo", "x_hi", "v_lo", "v_hi", "w_lo", "w_hi", "eta_lo", "eta_hi", "supF",
    "E_kin", "E_osc", "detJ_err", "status",
];

pub fn write_diagnostics(path: &Path, diags: &[Diagnostics]) -> Result<(), IoError> {
    let mut t = Table::create(path, &DIAGNOSTICS_HEADER)?;
    for d in diags {
        let s = &d.support;
        let mut cells: Vec<String> = [
            d.time, d.l1, d.linf, s.x_lo, s.x_hi, s.v_lo, s.v_hi, s.omega_lo, s.omega_hi, s.eta_lo,
            s.eta_hi, d.sup_f, d.e_kin, d.e_osc, d.detj_err,
        ]
        .iter()
        .map(|&v| num(v))
        .collect();
        cells.push(d.status.label());
        t.line(&cells)?;
    }
    t.finish()
}

/// Run manifest: the effective configuration and whatever the command certified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<BoundCertificate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<CertReport>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            certificate: None,
            reports: Vec::new(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ParticleState;
    use crate::hooke::HookeModel;
    use crate::trajectory::{integrate, ConstantPm, Frozen, StepControl};

    #[test]
    fn floats_roundtrip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn path_roundtrip_is_exact() {
        let m = HookeModel::tangent(1.0).unwrap();
        let f = ConstantPm {
            f_plus: 0.3,
            f_minus: 1.5,
        };
        let mut p = integrate(
            &ParticleState::new(0.0, 0.1, 0.7, 1.5, 0.0),
            &Frozen(&f),
            &m,
            0.0,
            0.5,
            &StepControl::with_dt(0.01),
        )
        .unwrap();
        p.events = crate::trajectory::detect_events(&p, &m.balance_points(1.0).unwrap(), 1e-3);
        let dir = tempfile::tempdir().unwrap();
        write_path(dir.path(), "seed", &p).unwrap();
        let q = read_path(dir.path(), "seed").unwrap();
        assert_eq!(p.times, q.times);
        assert_eq!(p.states, q.states);
        assert_eq!(p.steps, q.steps);
        assert_eq!(p.events.len(), q.events.len());
        for (a, b) in p.events.iter().zip(&q.events) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.time, b.time);
        }
    }

    #[test]
    fn rejects_foreign_headers() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.csv"), "a,b\n1,2\n").unwrap();
        assert!(read_path(dir.path(), "p").is_err());
    }

    #[test]
    fn snapshot_columns() {
        let e = Ensemble::new(
            vec![
                ParticleState::new(1.0, 0.0, 0.5, 0.0, 0.25),
                ParticleState::new(-1.0, 0.0, 0.5, 0.0, 0.5),
            ],
            0.0,
            1.0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("s.csv");
        write_snapshot(&file, &FieldSnapshot::build(&e).unwrap()).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_sorted,cum_mass");
        assert_eq!(lines[1], format!("{},{}", num(-1.0), num(1.0)));
        assert_eq!(lines[2], format!("{},{}", num(1.0), num(1.5)));
    }
}
