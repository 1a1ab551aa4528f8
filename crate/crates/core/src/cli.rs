//! Command-line front end: `validate-hooke`, `trajectory`, `bounds`, `picard`, `simulate`, `certify`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 certificate violation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{certify, BoundCertificate, BoundsError, CertReport};
use crate::datum::{Bump, DatumError, InitialDatum};
use crate::field::{Ensemble, FieldError, FieldSnapshot, ParticleState, SupportBox};
use crate::hooke::{HookeError, HookeModel};
use crate::io::{self, IoError, Manifest};
use crate::picard::{fit_contraction, iterate, PicardError, PicardSettings};
use crate::simulator::{run_observed, SimError, SimSettings};
use crate::trajectory::{
    detect_events, energy_residual, integrate, ConstantPm, Frozen, PairField, StepControl,
    TrajectoryError, ZeroField,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

/// Environment variable that fixes the worker-thread count.
pub const THREADS_ENV: &str = "DIATOMIC_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Violation(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Violation(_) => EXIT_VIOLATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Violation(m) => m,
        }
    }
}

impl From<HookeError> for CliError {
    fn from(e: HookeError) -> Self {
        match e {
            HookeError::Epsilon(_) | HookeError::Table(_) | HookeError::Io(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::Control(_) | TrajectoryError::InitialState(_) => {
                CliError::Config(e.to_string())
            }
            TrajectoryError::Hooke(h) => h.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Parameters(_) | BoundsError::InvalidC { .. } => {
                CliError::Config(e.to_string())
            }
            BoundsError::Hooke(h) => h.into(),
            BoundsError::NoConfinement { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DatumError> for CliError {
    fn from(e: DatumError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PicardError> for CliError {
    fn from(e: PicardError) -> Self {
        match e {
            PicardError::Trajectory(t) => t.into(),
            PicardError::Field(f) => f.into(),
            PicardError::Datum(d) => d.into(),
            PicardError::Setup(m) => CliError::Config(m),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Particle { ref source, .. } | SimError::Seed { ref source, .. } => {
                match source {
                    TrajectoryError::Control(_) | TrajectoryError::InitialState(_) => {
                        CliError::Config(e.to_string())
                    }
                    _ => CliError::Numerical(e.to_string()),
                }
            }
            SimError::Config(m) => CliError::Config(m),
            SimError::Observer(m) => CliError::Config(m),
            SimError::Datum(d) => d.into(),
            SimError::Field(f) => f.into(),
            SimError::Bounds(b) => b.into(),
            SimError::Hooke(h) => h.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HookeConfig {
    Tangent {
        epsilon: f64,
    },
    /// Two-column `omega,force` table on `(0, ε)`.
    Table {
        epsilon: f64,
        path: PathBuf,
    },
}

impl Default for HookeConfig {
    fn default() -> Self {
        HookeConfig::Tangent { epsilon: 1.0 }
    }
}

impl HookeConfig {
    pub fn build(&self) -> Result<HookeModel, HookeError> {
        match self {
            HookeConfig::Tangent { epsilon } => HookeModel::tangent(*epsilon),
            HookeConfig::Table { epsilon, path } => HookeModel::from_table_file(*epsilon, path),
        }
    }
}

/// Frozen field for the `trajectory` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Zero,
    Constant {
        f_plus: f64,
        f_minus: f64,
    },
    /// Step field of the sampled initial datum.
    Datum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    /// `(x, v, ω, η)`
    pub initial: [f64; 4],
    pub t0: f64,
    /// End time; the top-level horizon when absent.
    pub t1: Option<f64>,
    pub field: FieldConfig,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            initial: [0.0, 0.0, 0.5, 1.0],
            t0: 0.0,
            t1: None,
            field: FieldConfig::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    /// Half the confinement time when absent.
    pub horizon: Option<f64>,
    pub n_max: usize,
    pub probes: usize,
    pub probe_offset: u64,
    pub tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        let p = PicardSettings::default();
        Self {
            horizon: None,
            n_max: p.n_max,
            probes: p.probes,
            probe_offset: p.probe_offset,
            tol: p.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub hooke: HookeConfig,
    pub datum: InitialDatum,
    pub horizon: f64,
    pub dt_macro: f64,
    pub control: StepControl,
    pub tracked_seeds: usize,
    pub jacobian_h: f64,
    pub margin: f64,
    /// Field constant `C = safety · 2‖f̊‖₁`.
    pub safety: f64,
    /// Snapshot dump period in macro steps; 0 disables.
    pub snapshot_every: usize,
    pub output: PathBuf,
    pub validate_grid: usize,
    pub trajectory: TrajectoryConfig,
    pub picard: PicardConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            hooke: HookeConfig::default(),
            datum: InitialDatum::Bumps {
                bumps: vec![Bump {
                    center: [0.0, 0.0, 0.5, 0.0],
                    width: [1.0, 0.5, 0.2, 0.5],
                    amplitude: 1.0,
                }],
                cells: [8, 8, 8, 8],
            },
            horizon: s.horizon,
            dt_macro: s.dt_macro,
            control: s.seed_control,
            tracked_seeds: s.tracked_seeds,
            jacobian_h: s.jacobian_h,
            margin: s.margin,
            safety: s.safety,
            snapshot_every: 0,
            output: PathBuf::from("out"),
            validate_grid: 2001,
            trajectory: TrajectoryConfig::default(),
            picard: PicardConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn sim_settings(&self) -> SimSettings {
        SimSettings {
            horizon: self.horizon,
            dt_macro: self.dt_macro,
            seed_control: self.control,
            tracked_seeds: self.tracked_seeds,
            jacobian_h: self.jacobian_h,
            margin: self.margin,
            safety: self.safety,
        }
    }

    pub fn echo(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

/// Sets `key` (dot-separated; numeric parts index arrays) in `doc`. The value is parsed
/// as JSON, else taken as a string. Missing intermediate objects are seeded from `defaults`.
pub fn apply_override(doc: &mut Value, defaults: &Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let bad = |part: &str| CliError::Config(format!("--set {key}: no slot {part:?}"));
    let mut node = doc;
    let mut fallback = Some(defaults);
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        fallback = fallback.and_then(|d| match part.parse::<usize>() {
            Ok(k) if d.is_array() => d.get(k),
            _ => d.get(part),
        });
        node = match node {
            Value::Array(items) => {
                let k: usize = part.parse().map_err(|_| bad(part))?;
                let slot = items.get_mut(k).ok_or_else(|| bad(part))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Object(obj) => {
                if last {
                    obj.insert(part.to_string(), value);
                    return Ok(());
                }
                obj.entry(part.to_string()).or_insert_with(|| {
                    fallback
                        .cloned()
                        .unwrap_or_else(|| Value::Object(Default::default()))
                })
            }
            _ => return Err(bad(part)),
        };
    }
    Ok(())
}

/// Reads the JSON config (defaults when absent) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let defaults = RunConfig::default().echo();
    for o in overrides {
        apply_override(&mut doc, &defaults, o)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(format!("config: {e}")))
}

#[derive(Debug, Parser)]
#[command(name = "diatomic", version, about = "Diatomic Vlasov-Poisson toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set horizon=0.5`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output`)
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = load_config(self.config.as_deref(), &self.overrides)?;
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Hooke model against its structural hypotheses
    ValidateHooke(Common),
    /// Integrate one characteristic in a frozen field
    Trajectory(Common),
    /// Print the a priori bound certificate of the configured datum
    Bounds(Common),
    /// Run the Picard iteration and fit its contraction constant
    Picard(Common),
    /// Self-consistent particle simulation
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write the tracked-seed paths and their certificate reports
        #[arg(long)]
        seed_report: bool,
    },
    /// Re-check written paths against a stored certificate
    Certify {
        /// Directory holding `manifest.json` and path CSVs
        #[arg(long)]
        path: PathBuf,
        /// Only this path stem; all stems in the directory otherwise
        #[arg(long)]
        stem: Option<String>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match std::env::var(THREADS_ENV) {
        Ok(n) => match n.trim().parse::<usize>() {
            Ok(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| execute(cli.command)),
                Err(e) => Err(CliError::Config(format!("{THREADS_ENV}: {e}"))),
            },
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {n:?}"
            ))),
        },
        Err(_) => execute(cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::ValidateHooke(c) => validate_hooke(&c.load()?),
        Command::Trajectory(c) => trajectory(&c.load()?),
        Command::Bounds(c) => bounds(&c.load()?),
        Command::Picard(c) => picard(&c.load()?),
        Command::Simulate {
            common,
            seed_report,
        } => simulate(&common.load()?, seed_report),
        Command::Certify { path, stem } => certify_dir(&path, stem.as_deref()),
    }
}

/// A closed stdout is not an error.
fn print_json<T: Serialize>(value: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).unwrap_or_default();
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))
}

fn validate_hooke(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.hooke.build()?;
    let report = model.validate(cfg.validate_grid);
    print_json(&report);
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "Hooke model violates {:?}",
            report.failed()
        )))
    }
}

/// Certificate for the configured datum, whose ω-support must sit strictly inside `(0, ε)`.
fn datum_certificate(
    cfg: &RunConfig,
    model: &HookeModel,
) -> Result<(BoundCertificate, SupportBox), CliError> {
    cfg.datum.validate(model.epsilon())?;
    let ens = cfg.datum.sample()?;
    let cert =
        BoundCertificate::from_support(model, &ens.support, ens.mass(), cfg.horizon, cfg.safety)?;
    Ok((cert, ens.support))
}

fn bounds(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.hooke.build()?;
    let (cert, _) = datum_certificate(cfg, &model)?;
    print_json(&cert);
    Ok(())
}

fn trajectory(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.hooke.build()?;
    let tc = &cfg.trajectory;
    let t1 = tc.t1.unwrap_or(tc.t0 + cfg.horizon);
    let [x, v, omega, eta] = tc.initial;
    let seed = ParticleState::new(x, v, omega, eta, 0.0);
    if !(omega > 0.0 && omega < model.epsilon()) {
        return Err(CliError::Config(format!(
            "initial omega {omega} must lie strictly inside (0, {})",
            model.epsilon()
        )));
    }
    let snapshot;
    let constant;
    let field: &dyn PairField = match &tc.field {
        FieldConfig::Zero => &ZeroField,
        FieldConfig::Constant { f_plus, f_minus } => {
            constant = ConstantPm {
                f_plus: *f_plus,
                f_minus: *f_minus,
            };
            &constant
        }
        FieldConfig::Datum => {
            cfg.datum.validate(model.epsilon())?;
            snapshot = FieldSnapshot::build(&cfg.datum.sample()?)?;
            &snapshot
        }
    };
    // a frozen field with sup|F±| = S is certified as mass S/2
    let cert = BoundCertificate::from_support(
        &model,
        &SupportBox::point(&seed),
        0.5 * field.sup_pm(),
        (t1 - tc.t0).abs(),
        cfg.safety,
    )?;
    let mut path = integrate(&seed, &Frozen(field), &model, tc.t0, t1, &cfg.control)?;
    path.events = detect_events(&path, &cert.balance, cfg.control.event_tol);
    let report = certify(&path, &cert, &path.events, &model);
    let residual = energy_residual(&path, tc.t0, t1, &model)?;

    create_dir(&cfg.output)?;
    io::write_path(&cfg.output, "path", &path)?;
    let mut manifest = Manifest::new("trajectory", cfg.echo());
    manifest.certificate = Some(cert);
    manifest.reports = vec![report.clone()];
    io::write_json(&cfg.output.join("manifest.json"), &manifest)?;
    print_json(&serde_json::json!({
        "final_time": path.last_time(),
        "final_state": path.last_state(),
        "steps": path.steps.len(),
        "events": path.events.iter().map(|e| serde_json::json!({"t": e.time, "kind": e.kind.label()})).collect::<Vec<_>>(),
        "energy_residual": residual,
        "certified": report.passed,
    }));
    Ok(())
}

fn picard(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.hooke.build()?;
    let (cert, _) = datum_certificate(cfg, &model)?;
    let horizon = cfg.picard.horizon.unwrap_or(0.5 * cert.t0);
    let settings = PicardSettings {
        horizon,
        dt_macro: cfg.dt_macro.min(horizon.max(f64::MIN_POSITIVE)),
        control: cfg.control,
        n_max: cfg.picard.n_max,
        probes: cfg.picard.probes,
        probe_offset: cfg.picard.probe_offset,
        tol: cfg.picard.tol,
    };
    let records = iterate(&cfg.datum, &model, &settings)?;
    let fit = fit_contraction(&records, horizon, cfg.picard.n_max);
    create_dir(&cfg.output)?;
    io::write_iterations(&cfg.output.join("iterations.csv"), &records)?;
    let mut manifest = Manifest::new("picard", cfg.echo());
    manifest.certificate = Some(cert);
    io::write_json(&cfg.output.join("manifest.json"), &manifest)?;
    print_json(&serde_json::json!({
        "horizon": horizon,
        "sup_delta": records.iter().map(|r| r.sup_delta).collect::<Vec<_>>(),
        "k": fit.as_ref().map(|f| f.k),
        "envelope_holds": fit.as_ref().map(|f| f.envelope_holds),
    }));
    Ok(())
}

fn simulate(cfg: &RunConfig, seed_report: bool) -> Result<(), CliError> {
    let model = cfg.hooke.build()?;
    cfg.datum.validate(model.epsilon())?;
    let settings = cfg.sim_settings();
    let initial = cfg.datum.sample()?;
    create_dir(&cfg.output)?;
    io::write_ensemble(&cfg.output.join("ensemble_initial.csv"), &initial)?;
    let snap_dir = cfg.output.join("snapshots");
    if cfg.snapshot_every > 0 {
        create_dir(&snap_dir)?;
    }
    let every = cfg.snapshot_every;
    let mut dump = |k: usize, ens: &Ensemble, snap: &FieldSnapshot| -> Result<(), SimError> {
        if every > 0 && k.is_multiple_of(every) {
            let write = || -> Result<(), IoError> {
                io::write_ensemble(&snap_dir.join(format!("ensemble_{k:06}.csv")), ens)?;
                io::write_snapshot(&snap_dir.join(format!("field_{k:06}.csv")), snap)
            };
            write().map_err(|e| SimError::Observer(e.to_string()))?;
        }
        Ok(())
    };
    let out = run_observed(initial.clone(), &model, &settings, &mut dump)?;
    io::write_diagnostics(&cfg.output.join("diagnostics.csv"), &out.diagnostics)?;
    io::write_ensemble(&cfg.output.join("ensemble_final.csv"), &out.ensemble)?;
    io::write_snapshot(
        &cfg.output.join("field_final.csv"),
        &FieldSnapshot::build(&out.ensemble)?,
    )?;

    let reports: Vec<CertReport> = out.seeds.iter().filter_map(|s| s.report.clone()).collect();
    if seed_report {
        let dir = cfg.output.join("seeds");
        create_dir(&dir)?;
        for (i, s) in out.seeds.iter().enumerate() {
            io::write_path(&dir, &format!("seed_{i:03}"), &s.path)?;
        }
        let mut m = Manifest::new("simulate", cfg.echo());
        m.certificate = Some(out.certificate.clone());
        m.reports = reports.clone();
        io::write_json(&dir.join("manifest.json"), &m)?;
    }
    let mut manifest = Manifest::new("simulate", cfg.echo());
    manifest.certificate = Some(out.certificate.clone());
    if seed_report {
        manifest.reports = reports.clone();
    }
    io::write_json(&cfg.output.join("manifest.json"), &manifest)?;

    let last = out
        .diagnostics
        .last()
        .map(|d| d.status.label())
        .unwrap_or_default();
    let failed = reports.iter().filter(|r| !r.passed).count();
    print_json(&serde_json::json!({
        "steps": out.diagnostics.len().saturating_sub(1),
        "particles": out.ensemble.len(),
        "final_status": last,
        "seed_reports_failed": failed,
    }));
    if let Some(d) = out.diagnostics.iter().find(|d| d.status.is_fail()) {
        return Err(CliError::Violation(format!(
            "continuation {} at t = {}",
            d.status.label(),
            d.time
        )));
    }
    if failed > 0 {
        return Err(CliError::Violation(format!(
            "{failed} tracked seeds violate the certificate"
        )));
    }
    Ok(())
}

fn certify_dir(dir: &Path, stem: Option<&str>) -> Result<(), CliError> {
    let manifest: Manifest = io::read_json(&dir.join("manifest.json"))?;
    let cert = manifest.certificate.ok_or_else(|| {
        CliError::Config(format!("{}: manifest has no certificate", dir.display()))
    })?;
    let cfg: RunConfig = serde_json::from_value(manifest.config)
        .map_err(|e| CliError::Config(format!("manifest config: {e}")))?;
    let model = cfg.hooke.build()?;

    let stems: Vec<String> = match stem {
        Some(s) => vec![s.to_string()],
        None => {
            let mut v: Vec<String> = std::fs::read_dir(dir)
                .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    e.file_name()
                        .to_str()
                        .and_then(|n| n.strip_suffix("_steps.csv"))
                        .map(str::to_string)
                })
                .collect();
            v.sort();
            v
        }
    };
    if stems.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no paths to certify",
            dir.display()
        )));
    }
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for s in &stems {
        let path = io::read_path(dir, s)?;
        let events = detect_events(&path, &cert.balance, cfg.control.event_tol);
        let report = certify(&path, &cert, &events, &model);
        if !report.passed {
            failed.push(s.clone());
        }
        results.push(serde_json::json!({"stem": s, "report": report}));
    }
    print_json(&results);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(format!(
            "certificate violated by {}",
            failed.join(", ")
        )))
    }
}
