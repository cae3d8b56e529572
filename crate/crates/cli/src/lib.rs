//! Command-line front end for `qxform`.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qxform::algebra::{commutator, conjugate_by_series, conjugate_element, AlgebraElement, BasisOp, GaugeParams};
use qxform::examples::{
    example1_systems, example2_degeneracy_check, example2_systems, pipeline_from_tq, Example1Params, Example2Params,
    ExampleSystems,
};
use qxform::propagate::{propagate_with, residual_report, PropagateOptions, SpatialGrid, Trajectory, WaveState};
use qxform::systems::{AnySystem, Schrodinger, TMSystem, TQSystem};
use qxform::timefn::{Domain, TimeFunction, TimeMap};
use qxform::transforms::{
    gauge_residuals, max_deviation, printed_formula_discrepancies, run_tq_to_tm, run_tq_to_to, solve_gauge,
    time_map_from_f, tm_deviation, tm_to_to, tm_to_tq, to_to_tm, tq_deviation, tq_to_tm_with_tol, Discrepancy,
    GaugeTriple, DEFAULT_GAUGE_TOL,
};

use config::{GaugeSpec, JobConfig, MapSpec, PropagationSpec, SystemSpec, TargetSpec};

pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_TIME_SAMPLES: usize = 2001;
const DEFAULT_SPACE_POINTS: usize = 512;
const DEFAULT_DT: f64 = 1e-3;
const ROUNDTRIP_TOL: f64 = 1e-8;
const ALGEBRA_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-4;
const DEGENERACY_TOL: f64 = 1e-6;
const NORM_DRIFT_TOL: f64 = 1e-8;
const ALGEBRA_DRAWS: usize = 200;

#[derive(Parser, Debug)]
#[command(name = "qxform", version, about = "Transform and verify quadratic Schrödinger equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: GlobalOpts,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalOpts {
    /// JSON job file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Time samples for transforms, spatial points for propagation.
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write raw amplitudes to `<out>.amps`.
    #[arg(long, global = true)]
    pub dump_amps: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Carry a system from one class to another.
    Transform {
        #[arg(value_enum)]
        kind: TransformKind,
    },
    /// Crank–Nicolson evolution of a Gaussian; writes CSV.
    Propagate,
    /// Run a verification suite; exits 1 when a check fails.
    Verify {
        #[arg(value_enum)]
        suite: VerifySuite,
        #[command(flatten)]
        example: ExampleArgs,
    },
    /// Closed-form example systems.
    Example {
        #[arg(value_enum)]
        name: ExampleName,
        #[command(flatten)]
        example: ExampleArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    TqToTm,
    TmToTo,
    ToToTm,
    TmToTq,
    TqToTo,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifySuite {
    Algebra,
    Gauge,
    Roundtrip,
    Residual,
    Degeneracy,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleName {
    Ex1,
    Ex2,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ExampleArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub upsilon: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t0_prime: Option<f64>,
    /// End of the working window.
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Comma-separated list for the degeneracy suite.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub a_values: Option<Vec<f64>>,
}

/// What went wrong, with its exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: "validation",
            message: message.into(),
            exit: EXIT_VALIDATION,
        }
    }

    fn verify(message: impl Into<String>) -> Self {
        Self {
            kind: "verify",
            message: message.into(),
            exit: EXIT_VERIFY,
        }
    }

    /// One line of JSON for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({"error": self.kind, "message": self.message, "exit": self.exit}).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<qxform::Error> for CliError {
    fn from(e: qxform::Error) -> Self {
        if e.is_numerical() {
            Self {
                kind: "numerical",
                message: e.to_string(),
                exit: EXIT_NUMERICAL,
            }
        } else {
            Self::validation(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Maps `QXFORM_LOG` to a level filter.
pub fn log_level(value: Option<&str>) -> CliResult<log::LevelFilter> {
    match value {
        None | Some("") => Ok(log::LevelFilter::Warn),
        Some("quiet") => Ok(log::LevelFilter::Off),
        Some("info") => Ok(log::LevelFilter::Info),
        Some("debug") => Ok(log::LevelFilter::Debug),
        Some(other) => Err(CliError::validation(format!(
            "QXFORM_LOG must be quiet, info or debug, got {other:?}"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaugeSummary {
    pub window: [f64; 2],
    pub max_abs_kappa: f64,
    pub max_abs_mu: f64,
    pub max_abs_nu: f64,
    pub step_error: f64,
    pub closed_form: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapDomain {
    pub t: Domain,
    pub t_prime: Domain,
    pub t0: f64,
    pub t0_prime: f64,
}

/// Output of `transform` and `example`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub source: String,
    pub target: String,
    pub gauge_summary: Option<GaugeSummary>,
    pub map_domain: Option<MapDomain>,
    pub residuals: BTreeMap<String, f64>,
    pub discrepancies: Vec<Discrepancy>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub systems: BTreeMap<String, SystemSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
}

impl Report {
    fn new(command: &str, source: &str, target: &str) -> Self {
        Self {
            command: command.to_string(),
            source: source.to_string(),
            target: target.to_string(),
            gauge_summary: None,
            map_domain: None,
            residuals: BTreeMap::new(),
            discrepancies: Vec::new(),
            systems: BTreeMap::new(),
            gauge: None,
            map: None,
        }
    }

    fn result(&mut self, s: AnySystem) {
        self.systems.insert("result".into(), SystemSpec::from_system(&s));
    }

    fn with_gauge(&mut self, g: &GaugeTriple, closed_form: bool) -> CliResult<()> {
        let grid = g.knots().unwrap_or_else(|| g.window.grid(DEFAULT_TIME_SAMPLES));
        let [k, m, n] = g.max_abs(&grid)?;
        self.gauge_summary = Some(GaugeSummary {
            window: [g.window.lo, g.window.hi],
            max_abs_kappa: k,
            max_abs_mu: m,
            max_abs_nu: n,
            step_error: g.step_error,
            closed_form,
        });
        Ok(())
    }

    fn with_map(&mut self, m: &TimeMap) {
        self.map_domain = Some(MapDomain {
            t: m.domain(),
            t_prime: m.prime_domain(),
            t0: m.t0,
            t0_prime: m.t0_prime,
        });
    }
}

/// Output of `verify`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub passed: bool,
    pub tol: f64,
    pub checks: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl VerifyReport {
    fn new(suite: &str, tol: f64) -> Self {
        Self {
            suite: suite.to_string(),
            passed: true,
            tol,
            checks: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    /// Records `value` and fails the suite when it exceeds `limit`.
    fn check(&mut self, name: &str, value: f64, limit: f64) {
        self.checks.insert(name.to_string(), value);
        if !(value <= limit) {
            self.passed = false;
            self.failures.push(format!("{name} = {value:e} > {limit:e}"));
        }
    }
}

/// Flags override the config file.
#[derive(Clone, Debug)]
struct Job {
    cfg: JobConfig,
    opts: GlobalOpts,
}

impl Job {
    fn load(opts: &GlobalOpts) -> CliResult<Self> {
        let cfg = match &opts.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
                JobConfig::parse(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
            }
            None => JobConfig::default(),
        };
        Ok(Self {
            cfg,
            opts: opts.clone(),
        })
    }

    fn grid_n(&self, default: usize) -> usize {
        self.opts.grid_n.or(self.cfg.grid_n).unwrap_or(default)
    }

    fn dt(&self) -> f64 {
        self.opts.dt.or(self.cfg.dt).unwrap_or(DEFAULT_DT)
    }

    fn tol(&self, default: f64) -> f64 {
        self.opts.tol.or(self.cfg.tol).unwrap_or(default)
    }

    fn seed(&self) -> u64 {
        self.opts.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn t0_prime(&self) -> f64 {
        self.cfg.t0_prime.unwrap_or(0.0)
    }

    fn target(&self) -> TargetSpec {
        self.cfg.target.clone().unwrap_or(TargetSpec::Restricted)
    }

    fn system(&self) -> CliResult<AnySystem> {
        Ok(self.cfg.system()?)
    }

    fn system_spec(&self) -> CliResult<&SystemSpec> {
        self.cfg
            .system
            .as_ref()
            .ok_or_else(|| CliError::validation("config has no system"))
    }

    fn tq(&self) -> CliResult<TQSystem> {
        match self.system()? {
            AnySystem::Tq(s) => Ok(s),
            other => Err(CliError::validation(format!("expected a TQ system, got {}", other.class_name()))),
        }
    }

    fn tm(&self) -> CliResult<TMSystem> {
        match self.system()? {
            AnySystem::Tm(s) => Ok(s),
            other => Err(CliError::validation(format!("expected a TM system, got {}", other.class_name()))),
        }
    }

    fn time_samples(&self) -> CliResult<usize> {
        let n = self.grid_n(DEFAULT_TIME_SAMPLES);
        if n < 5 {
            return Err(CliError::validation(format!("grid-n must be at least 5, got {n}")));
        }
        Ok(n)
    }
}

/// Runs one invocation and writes its artifacts.
pub fn run(cli: &Cli) -> CliResult<()> {
    let job = Job::load(&cli.opts)?;
    if cli.opts.dump_amps && !matches!(cli.command, Command::Propagate) {
        return Err(CliError::validation("--dump-amps only applies to propagate"));
    }
    match &cli.command {
        Command::Transform { kind } => {
            let report = transform(&job, *kind)?;
            emit_json(&job, &report)
        }
        Command::Propagate => run_propagate(&job),
        Command::Verify { suite, example } => {
            let report = verify(&job, *suite, example)?;
            emit_json(&job, &report)?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::verify(format!(
                    "{} suite failed: {}",
                    report.suite,
                    report.failures.join("; ")
                )))
            }
        }
        Command::Example { name, example } => {
            let report = example_report(&job, *name, example)?;
            emit_json(&job, &report)
        }
    }
}

fn emit_json<T: Serialize>(job: &Job, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    text.push('\n');
    emit(job.opts.out.as_deref(), text.as_bytes())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::validation(format!("cannot write stdout: {e}"))),
    }
}

fn transform(job: &Job, kind: TransformKind) -> CliResult<Report> {
    let name = format!("transform {}", kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
    let tol = job.tol(DEFAULT_GAUGE_TOL);
    match kind {
        TransformKind::TqToTm => {
            let tq = job.tq()?;
            let mut report = Report::new(&name, "TQ", "TM");
            let target = job.target().to_target();
            let tm = match &job.cfg.gauge {
                Some(spec) => {
                    let gauge = spec.to_gauge(tq.window)?;
                    let tm = tq_to_tm_with_tol(&tq, &gauge, tol)?;
                    let res = gauge_residuals(&tq, &gauge, &target)?;
                    report.residuals.insert("gauge_dilation".into(), res.dilation);
                    report.residuals.insert("gauge_drift".into(), res.drift);
                    report.residuals.insert("gauge_mass".into(), res.mass);
                    report.discrepancies = printed_formula_discrepancies(&tm, &gauge)?;
                    report.with_gauge(&gauge, true)?;
                    tm
                }
                None => {
                    let grid = tq.window.grid(job.time_samples()?);
                    let (tm, r) = run_tq_to_tm(&tq, &target, &grid, tol)?;
                    report.residuals = r.residuals;
                    report.discrepancies = r.discrepancies;
                    if let Some(g) = &r.gauge {
                        report.with_gauge(g, false)?;
                    }
                    tm
                }
            };
            report.result(AnySystem::Tm(tm));
            Ok(report)
        }
        TransformKind::TqToTo => {
            let tq = job.tq()?;
            let grid = tq.window.grid(job.time_samples()?);
            let (tm, to, r) = run_tq_to_to(&tq, &job.target().to_target(), &grid, job.t0_prime(), tol)?;
            let mut report = Report::new(&name, "TQ", "TO");
            report.residuals = r.residuals;
            report.discrepancies = r.discrepancies;
            if let Some(g) = &r.gauge {
                report.with_gauge(g, false)?;
            }
            if let Some(m) = &r.time_map {
                report.with_map(m);
            }
            report.systems.insert("intermediate".into(), SystemSpec::from_system(&AnySystem::Tm(tm)));
            report.result(AnySystem::To(to));
            Ok(report)
        }
        TransformKind::TmToTo => {
            let spec = job.system_spec()?;
            let map = match &job.cfg.map {
                Some(m) => m.to_map()?,
                None => {
                    // Build the map before the system so a non-positive
                    // mass is reported as a map failure.
                    let f = spec
                        .coeffs
                        .get("f")
                        .ok_or_else(|| CliError::validation("TM system needs the mass coefficient f"))?;
                    let lo = spec.domain[0];
                    let grid = qxform::systems::Window::new(lo, spec.domain[1])?.grid(job.time_samples()?);
                    time_map_from_f(f, lo, job.t0_prime(), &grid)?
                }
            };
            let tm = job.tm()?;
            let to = tm_to_to(&tm, &map)?;
            let mut report = Report::new(&name, "TM", "TO");
            let grid = tm.window.grid(job.time_samples()?);
            report.residuals.insert("map_roundtrip".into(), map.roundtrip_error(&grid)?);
            report.with_map(&map);
            report.result(AnySystem::To(to));
            Ok(report)
        }
        TransformKind::ToToTm => {
            let to = match job.system()? {
                AnySystem::To(s) => s,
                other => return Err(CliError::validation(format!("expected a TO system, got {}", other.class_name()))),
            };
            let map = job
                .cfg
                .map
                .as_ref()
                .ok_or_else(|| CliError::validation("to-to-tm needs a map"))?
                .to_map()?;
            let tm = to_to_tm(&to, &map)?;
            let mut report = Report::new(&name, "TO", "TM");
            let grid = tm.window.grid(job.time_samples()?);
            report.residuals.insert("map_roundtrip".into(), map.roundtrip_error(&grid)?);
            report.with_map(&map);
            report.result(AnySystem::Tm(tm));
            Ok(report)
        }
        TransformKind::TmToTq => {
            let tm = job.tm()?;
            let gauge = job
                .cfg
                .gauge
                .as_ref()
                .ok_or_else(|| CliError::validation("tm-to-tq needs a gauge"))?
                .to_gauge(tm.window)?;
            let tq = tm_to_tq(&tm, &gauge)?;
            let mut report = Report::new(&name, "TM", "TQ");
            let back = tq_to_tm_with_tol(&tq, &gauge, f64::INFINITY)?;
            let grid = tq.window.grid(job.time_samples()?);
            report.residuals.insert("tm_roundtrip".into(), tm_deviation(&tm, &back, &grid)?);
            report.discrepancies = printed_formula_discrepancies(&tm, &gauge)?;
            report.with_gauge(&gauge, true)?;
            report.result(AnySystem::Tq(tq));
            Ok(report)
        }
    }
}

fn run_propagate(job: &Job) -> CliResult<()> {
    let (_, traj) = propagation(job)?;
    info!("{} states, norm drift {:e}", traj.states.len(), traj.max_norm_drift());
    emit(job.opts.out.as_deref(), traj.to_csv().as_bytes())?;
    if job.opts.dump_amps {
        let out = job
            .opts
            .out
            .as_ref()
            .ok_or_else(|| CliError::validation("--dump-amps needs --out"))?;
        let mut path = out.clone().into_os_string();
        path.push(".amps");
        let file = fs::File::create(&path)
            .map_err(|e| CliError::validation(format!("cannot write {}: {e}", Path::new(&path).display())))?;
        traj.write_amplitudes(std::io::BufWriter::new(file))
            .map_err(|e| CliError::validation(format!("cannot write amplitudes: {e}")))?;
    }
    Ok(())
}

fn propagation(job: &Job) -> CliResult<(AnySystem, Trajectory)> {
    let system = job.system()?;
    let spec = job.cfg.propagation.clone().unwrap_or_else(PropagationSpec::default);
    let window = system.window();
    let t_end = spec.t_end.unwrap_or(window.hi);
    let dt = job.dt();
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::validation(format!("dt must be positive, got {dt}")));
    }
    let steps = ((t_end - window.lo) / dt).round().max(1.0) as usize;
    let grid = SpatialGrid::symmetric(spec.half_width, job.grid_n(DEFAULT_SPACE_POINTS))?;
    let g = &spec.initial;
    let psi = WaveState::gaussian(grid, g.x0, g.p0, g.sigma, window.lo)?;
    let traj = propagate_with(
        &system,
        &psi,
        t_end,
        steps,
        PropagateOptions {
            record_every: spec.record_every,
        },
    )?;
    Ok((system, traj))
}

fn verify(job: &Job, suite: VerifySuite, ex: &ExampleArgs) -> CliResult<VerifyReport> {
    match suite {
        VerifySuite::Algebra => Ok(verify_algebra(job.seed(), job.tol(ALGEBRA_TOL))),
        VerifySuite::Gauge => {
            let tq = job.system()?.to_tq();
            let tol = job.tol(DEFAULT_GAUGE_TOL);
            let target = job.target().to_target();
            let grid = tq.window.grid(job.time_samples()?);
            let gauge = solve_gauge(&tq, &target, grid[0], &grid)?;
            let res = gauge_residuals(&tq, &gauge, &target)?;
            let mut r = VerifyReport::new("gauge", tol);
            r.check("dilation", res.dilation, tol);
            r.check("drift", res.drift, tol);
            r.check("mass", res.mass, tol);
            r.check("step_error", gauge.step_error, tol);
            Ok(r)
        }
        VerifySuite::Roundtrip => {
            let tq = job.system()?.to_tq();
            let tol = job.tol(ROUNDTRIP_TOL);
            let grid = tq.window.grid(job.time_samples()?);
            let gauge = solve_gauge(&tq, &job.target().to_target(), grid[0], &grid)?;
            let tm = tq_to_tm_with_tol(&tq, &gauge, DEFAULT_GAUGE_TOL)?;
            let tq_back = tm_to_tq(&tm, &gauge)?;
            let map = time_map_from_f(&tm.f, grid[0], job.t0_prime(), &grid)?;
            let to = tm_to_to(&tm, &map)?;
            let tm_back = to_to_tm(&to, &map)?;
            let mut r = VerifyReport::new("roundtrip", tol);
            r.check("tq_tm_tq", tq_deviation(&tq, &tq_back, &grid)?, tol);
            r.check("tm_to_tm", tm_deviation(&tm, &tm_back, &grid)?, tol);
            r.check("map", map.roundtrip_error(&grid)?, tol);
            Ok(r)
        }
        VerifySuite::Residual => {
            let tol = job.tol(RESIDUAL_TOL);
            let (system, traj) = propagation(job)?;
            let rep = residual_report(&system, &traj)?;
            let mut r = VerifyReport::new("residual", tol);
            r.check("residual", rep.max, tol);
            r.check("norm_drift", traj.max_norm_drift(), NORM_DRIFT_TOL);
            r.checks.insert("dt_max".into(), rep.dt_max);
            r.checks.insert("dx".into(), rep.dx);
            Ok(r)
        }
        VerifySuite::Degeneracy => {
            let tol = job.tol(DEGENERACY_TOL);
            let a_values = ex
                .a_values
                .clone()
                .or_else(|| job.cfg.a_values.clone())
                .unwrap_or_else(|| vec![0.5, 2.0, 3.0, -1.0]);
            let rep = example2_degeneracy_check(&a_values, ex.omega.unwrap_or(1.0), ex.t0.unwrap_or(1.0))?;
            let mut r = VerifyReport::new("degeneracy", tol);
            r.check("max_pairwise", rep.max_pairwise_deviation, tol);
            for c in &rep.curves {
                r.check(&format!("a={}", c.a), c.deviation_from_constant, tol);
            }
            Ok(r)
        }
    }
}

fn verify_algebra(seed: u64, tol: f64) -> VerifyReport {
    use BasisOp::*;
    let e = AlgebraElement::basis;
    let i = |v: f64| Complex64::new(0.0, v);
    let table = [
        (X, P, AlgebraElement::term(I, i(1.0))),
        (X2, P2, AlgebraElement::term(D, i(4.0))),
        (D, X2, AlgebraElement::term(X2, i(-2.0))),
        (D, P2, AlgebraElement::term(P2, i(2.0))),
        (P2, X, AlgebraElement::term(P, i(-2.0))),
        (X2, P, AlgebraElement::term(X, i(2.0))),
        (D, X, AlgebraElement::term(X, i(-1.0))),
        (D, P, AlgebraElement::term(P, i(1.0))),
    ];
    let brackets = table
        .iter()
        .map(|(a, b, want)| (commutator(&e(*a), &e(*b)) - *want).max_norm())
        .fold(0.0, f64::max);
    let mut jacobi = 0.0_f64;
    for a in BasisOp::ALL {
        for b in BasisOp::ALL {
            for c in BasisOp::ALL {
                let (ea, eb, ec) = (e(a), e(b), e(c));
                let j = commutator(&ea, &commutator(&eb, &ec))
                    + commutator(&eb, &commutator(&ec, &ea))
                    + commutator(&ec, &commutator(&ea, &eb));
                jacobi = jacobi.max(j.max_norm());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conj = 0.0_f64;
    for _ in 0..ALGEBRA_DRAWS {
        let g = GaugeParams::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        for op in BasisOp::ALL {
            conj = conj.max((conjugate_element(&e(op), g) - conjugate_by_series(&e(op), g)).max_norm());
        }
    }
    let mut r = VerifyReport::new("algebra", tol);
    r.check("brackets", brackets, tol);
    r.check("jacobi", jacobi, tol);
    r.check("conjugation", conj, tol);
    r
}

fn example1_params(ex: &ExampleArgs) -> Example1Params {
    let mut p = Example1Params::new(ex.upsilon.unwrap_or(0.1), ex.omega.unwrap_or(1.0), ex.t0.unwrap_or(0.0));
    if let Some(tp) = ex.t0_prime {
        p.t0_prime = tp;
    }
    if let Some(end) = ex.t_end {
        p.span = end - p.t0;
    }
    p
}

fn example2_params(ex: &ExampleArgs) -> Example2Params {
    let mut p = Example2Params::new(
        ex.a.unwrap_or(0.5),
        ex.b.unwrap_or(0.0),
        ex.omega.unwrap_or(1.0),
        ex.t0.unwrap_or(1.0),
    );
    if let Some(tp) = ex.t0_prime {
        p.t0_prime = tp;
    }
    p.t_end = ex.t_end;
    p
}

fn example_report(job: &Job, name: ExampleName, ex: &ExampleArgs) -> CliResult<Report> {
    let (label, systems, t0_prime) = match name {
        ExampleName::Ex1 => {
            let p = example1_params(ex);
            ("ex1", example1_systems(p)?, p.t0_prime)
        }
        ExampleName::Ex2 => {
            let p = example2_params(ex);
            ("ex2", example2_systems(p)?, p.t0_prime)
        }
    };
    let ExampleSystems { tq, tm, to, gauge, map } = systems;
    let mut report = Report::new(&format!("example {label}"), "TQ", "TO");
    let piped = pipeline_from_tq(&tq, t0_prime, job.time_samples()?)?;
    let grid = tq.window.grid(DEFAULT_TIME_SAMPLES);
    let cmp = |name: &str, a: &TimeFunction, b: &TimeFunction, grid: &[f64]| -> CliResult<(String, f64)> {
        Ok((format!("pipeline_{name}"), max_deviation(a, b, grid)?))
    };
    let prime_grid = piped.to.window.grid(DEFAULT_TIME_SAMPLES);
    for (k, v) in [
        cmp("kappa", &piped.gauge.kappa, &gauge.kappa, &grid)?,
        cmp("mu", &piped.gauge.mu, &gauge.mu, &grid)?,
        cmp("nu", &piped.gauge.nu, &gauge.nu, &grid)?,
        cmp("f", &piped.tm.f, &tm.f, &grid)?,
        cmp("f2", &piped.tm.f2, &tm.f2, &grid)?,
        cmp("map", &piped.map.forward, &map.forward, &grid)?,
        cmp("g2", &piped.to.g2, &to.g2, &prime_grid)?,
    ] {
        report.residuals.insert(k, v);
    }
    report.discrepancies = printed_formula_discrepancies(&tm, &gauge)?;
    report.with_gauge(&gauge, true)?;
    report.with_map(&map);
    report.systems.insert("tq".into(), SystemSpec::from_system(&AnySystem::Tq(tq)));
    report.systems.insert("tm".into(), SystemSpec::from_system(&AnySystem::Tm(tm)));
    report.systems.insert("to".into(), SystemSpec::from_system(&AnySystem::To(to)));
    report.gauge = Some(GaugeSpec {
        kappa: gauge.kappa,
        mu: gauge.mu,
        nu: gauge.nu,
    });
    report.map = Some(MapSpec {
        forward: map.forward,
        inverse: Some(map.inverse),
        t0: map.t0,
        t0_prime: map.t0_prime,
    });
    if report.residuals.values().any(|v| *v > 1e-6) {
        warn!("closed form and pipeline disagree: {:?}", report.residuals);
    }
    Ok(report)
}
