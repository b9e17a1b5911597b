//! Command-line front end: config ingestion, the `certify`, `simulate`,
//! `sweep`, `hopf` and `amplitude` commands, and their output files.
//!
//! Reports are `key = value` lines in a fixed order; trajectories and tables
//! are CSV with a header row. All floats are written with 17 significant
//! digits so re-reading a file reproduces the in-memory values exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::certify::{self, Certificate, SECANT_SCOPE};
use crate::dde::{simulate, CascadeModel, SimConfig};
use crate::{Error, RationalStage, SampledSignal};

/// The MAPK cascade shipped with the tool; used when `--config` is absent.
pub const BUNDLED_CONFIG: &str = include_str!("../configs/mapk.toml");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_FALSIFIED: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("certificate falsified: {0}")]
    Falsified(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Parse(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_input_error() => EXIT_CONFIG,
            CliError::Core(_) => EXIT_NUMERICAL,
            CliError::Falsified(_) => EXIT_FALSIFIED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "smallgain", version, about = "Small-gain certificates and DDE cross-checks for monotone cascades")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Run configuration (TOML); the bundled MAPK config is used when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Share of the record used as the asymptotic tail; overrides `[solver] tail_fraction`.
    #[arg(long, value_name = "F")]
    pub tail_fraction: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the feedback-gain certificate and write `certificate.txt`.
    Certify {
        #[command(flatten)]
        common: CommonArgs,
        /// Also simulate 3 initial states x 3 delay vectors at 0.95 k_max.
        #[arg(long)]
        check: bool,
        /// Seed for the random initial states of `--check`.
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
    },
    /// Simulate the closed loop at `[feedback] k`; writes the trajectory and a summary.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Simulate over `[feedback] k_range` and tabulate the tail amplitude of x_n.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Locate the onset of sustained oscillation inside `[feedback] hopf_bracket`.
    Hopf {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Tail amplitude and limit of every column of a trajectory CSV.
    Amplitude {
        /// Trajectory file written by `simulate`.
        file: PathBuf,
        #[arg(long, value_name = "F", default_value_t = crate::signals::DEFAULT_TAIL_FRACTION)]
        tail_fraction: f64,
        /// Amplitude below which a column counts as converged.
        #[arg(long, value_name = "TOL", default_value_t = 1e-4)]
        tol: f64,
    },
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    stage: BTreeMap<String, RawStage>,
    #[serde(default)]
    delays: RawDelays,
    feedback: RawFeedback,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    certify: RawCertify,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    b: f64,
    c: f64,
    d: f64,
    e: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDelays {
    inter_stage: Option<Vec<f64>>,
    #[serde(default)]
    feedback: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeedback {
    mu: f64,
    k: Option<f64>,
    k_range: Option<[f64; 2]>,
    k_points: Option<usize>,
    hopf_bracket: Option<[f64; 2]>,
    hopf_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    dt: f64,
    horizon: f64,
    x0: Option<Vec<f64>>,
    history: Option<Vec<f64>>,
    tail_fraction: f64,
    converge_tol: f64,
    osc_threshold: f64,
}

impl Default for RawSolver {
    fn default() -> Self {
        Self {
            dt: crate::dde::DEFAULT_DT,
            horizon: crate::dde::DEFAULT_HORIZON,
            x0: None,
            history: None,
            tail_fraction: crate::signals::DEFAULT_TAIL_FRACTION,
            converge_tol: 1e-4,
            osc_threshold: certify::DEFAULT_OSC_THRESHOLD,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCertify {
    u_bar: Option<f64>,
    u_bar_range: Option<[f64; 2]>,
    u_bar_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
    trajectory: String,
    summary: String,
    report: String,
    ubar_table: String,
    sweep: String,
    hopf: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("smallgain-out"),
            trajectory: "trajectory.csv".into(),
            summary: "summary.txt".into(),
            report: "certificate.txt".into(),
            ubar_table: "ubar_table.csv".into(),
            sweep: "sweep.csv".into(),
            hopf: "hopf.txt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub dt: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub history: Vec<f64>,
    pub tail_fraction: f64,
    pub converge_tol: f64,
    pub osc_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub trajectory: String,
    pub summary: String,
    pub report: String,
    pub ubar_table: String,
    pub sweep: String,
    pub hopf: String,
}

impl OutputSettings {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stages: Vec<RationalStage<f64>>,
    pub delays: Vec<f64>,
    pub feedback_delay: f64,
    pub mu: f64,
    pub k: Option<f64>,
    pub k_range: Option<(f64, f64, usize)>,
    pub hopf_bracket: Option<(f64, f64)>,
    pub hopf_tol: f64,
    pub solver: SolverSettings,
    pub u_bar: Option<f64>,
    pub u_bar_range: Option<(f64, f64, usize)>,
    pub output: OutputSettings,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| cfg_err(e.message().to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CONFIG).expect("bundled config is valid")
    }

    fn from_raw(raw: RawConfig) -> CliResult<Self> {
        let n = raw.stage.len();
        if n == 0 {
            return Err(cfg_err("at least one [stage.N] section is required"));
        }
        let mut stages = Vec::with_capacity(n);
        for i in 1..=n {
            let s = raw.stage.get(&i.to_string()).ok_or_else(|| {
                let keys: Vec<&String> = raw.stage.keys().collect();
                cfg_err(format!("stage sections must be numbered 1..{n}, found {keys:?}"))
            })?;
            let stage = RationalStage::new(s.b, s.c, s.d, s.e)
                .map_err(|e| cfg_err(format!("[stage.{i}]: {e}")))?;
            stages.push(stage);
        }

        let delays = raw.delays.inter_stage.unwrap_or_else(|| vec![0.0; n - 1]);
        if delays.len() != n - 1 {
            return Err(cfg_err(format!(
                "[delays] inter_stage needs {} entries for {n} stages, got {}",
                n - 1,
                delays.len()
            )));
        }
        if delays.iter().chain([&raw.delays.feedback]).any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(cfg_err("[delays] entries must be finite and >= 0"));
        }

        let fb = raw.feedback;
        if !(fb.mu > 0.0) || !fb.mu.is_finite() {
            return Err(cfg_err(format!("[feedback] mu must be positive, got {}", fb.mu)));
        }
        if let Some(k) = fb.k {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(cfg_err(format!("[feedback] k must be >= 0, got {k}")));
            }
        }
        let k_range = match (fb.k_range, fb.k_points) {
            (Some([lo, hi]), points) => {
                let points = points.unwrap_or(2);
                if !(lo >= 0.0 && lo <= hi) || !hi.is_finite() {
                    return Err(cfg_err(format!("[feedback] k_range must satisfy 0 <= start <= stop, got [{lo}, {hi}]")));
                }
                if points == 0 || (points == 1 && lo != hi) || (points >= 2 && lo == hi) {
                    return Err(cfg_err(format!(
                        "[feedback] k_points = {points} does not fit k_range [{lo}, {hi}] (use 1 point only for a single k)"
                    )));
                }
                Some((lo, hi, points))
            }
            (None, Some(_)) => return Err(cfg_err("[feedback] k_points given without k_range")),
            (None, None) => None,
        };
        let hopf_bracket = fb.hopf_bracket.map(|[lo, hi]| (lo, hi));
        let hopf_tol = fb.hopf_tol.unwrap_or(certify::DEFAULT_HOPF_TOL);
        if !(hopf_tol > 0.0) {
            return Err(cfg_err("[feedback] hopf_tol must be positive"));
        }

        let s = raw.solver;
        let x0 = s.x0.unwrap_or_else(|| vec![0.0; n]);
        let history = s.history.unwrap_or_else(|| x0.clone());
        for (name, v) in [("x0", &x0), ("history", &history)] {
            if v.len() != n {
                return Err(cfg_err(format!("[solver] {name} needs {n} entries, got {}", v.len())));
            }
            if v.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(cfg_err(format!("[solver] {name} entries must lie in [0, 1]")));
            }
        }
        for (name, v) in [("dt", s.dt), ("horizon", s.horizon), ("converge_tol", s.converge_tol), ("osc_threshold", s.osc_threshold)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(cfg_err(format!("[solver] {name} must be positive, got {v}")));
            }
        }
        if !(s.tail_fraction > 0.0 && s.tail_fraction <= 1.0) {
            return Err(cfg_err(format!("[solver] tail_fraction must lie in (0, 1], got {}", s.tail_fraction)));
        }

        let c = raw.certify;
        if let Some(u) = c.u_bar {
            if !(u > 0.0) || !u.is_finite() {
                return Err(cfg_err(format!("[certify] u_bar must be positive, got {u}")));
            }
        }
        let u_bar_range = match c.u_bar_range {
            Some([lo, hi]) => {
                let points = c.u_bar_points.unwrap_or(certify::DEFAULT_UBAR_GRID);
                if !(lo > 0.0 && lo < hi) || !hi.is_finite() || points < 2 {
                    return Err(cfg_err(format!(
                        "[certify] need 0 < start < stop and >= 2 points, got [{lo}, {hi}] with {points}"
                    )));
                }
                Some((lo, hi, points))
            }
            None if c.u_bar_points.is_some() => {
                return Err(cfg_err("[certify] u_bar_points given without u_bar_range"))
            }
            None => None,
        };

        let o = raw.output;
        Ok(Self {
            stages,
            delays,
            feedback_delay: raw.delays.feedback,
            mu: fb.mu,
            k: fb.k,
            k_range,
            hopf_bracket,
            hopf_tol,
            solver: SolverSettings {
                dt: s.dt,
                horizon: s.horizon,
                x0,
                history,
                tail_fraction: s.tail_fraction,
                converge_tol: s.converge_tol,
                osc_threshold: s.osc_threshold,
            },
            u_bar: c.u_bar,
            u_bar_range,
            output: OutputSettings {
                dir: o.dir,
                trajectory: o.trajectory,
                summary: o.summary,
                report: o.report,
                ubar_table: o.ubar_table,
                sweep: o.sweep,
                hopf: o.hopf,
            },
        })
    }

    fn apply_overrides(&mut self, common: &CommonArgs) -> CliResult<()> {
        if let Some(dir) = &common.out {
            self.output.dir = dir.clone();
        }
        if let Some(f) = common.tail_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(cfg_err(format!("--tail-fraction must lie in (0, 1], got {f}")));
            }
            self.solver.tail_fraction = f;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.stages.len()
    }

    pub fn model(&self, k: f64) -> CliResult<CascadeModel<f64>> {
        Ok(CascadeModel::new(self.stages.clone(), self.delays.clone(), self.feedback_delay, self.mu, k)?)
    }

    pub fn sim_config(&self) -> SimConfig<f64> {
        SimConfig::new(self.solver.dt, self.solver.horizon, self.solver.x0.clone())
            .with_history(self.solver.history.clone())
    }

    fn require_k(&self) -> CliResult<f64> {
        self.k.ok_or_else(|| cfg_err("[feedback] k is required for this command"))
    }
}

fn load_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::bundled(),
    };
    cfg.apply_overrides(common)?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Output helpers

/// 17 significant digits; parses back to the identical `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `key = value` report with insertion order preserved.
#[derive(Debug, Default)]
pub struct Report {
    title: String,
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self { title: title.to_string(), entries: Vec::new() }
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn put_num(&mut self, key: impl Into<String>, v: f64) {
        self.put(key, num(v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = format!("# {}\n", self.title);
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Inverse of [`Report::render`].
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut lines = text.lines();
        let title = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| CliError::Parse("report must start with a '# ' title line".into()))?;
        let mut report = Self::new(title);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| CliError::Parse(format!("malformed report line {line:?}")))?;
            report.put(k, v);
        }
        Ok(report)
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            context: format!("creating {}", parent.display()),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn csv_to_string(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Parse(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Column-wise tail statistics, shared by `simulate` and `amplitude` so the
/// two print identical lines for identical data.
fn column_summary(report: &mut Report, name: &str, sig: &SampledSignal<f64>, tail_fraction: f64, tol: f64, osc: Option<f64>) -> CliResult<bool> {
    let est = sig.estimate_limit(tail_fraction, tol)?;
    report.put_num(format!("amplitude.{name}"), est.amplitude);
    report.put(format!("converged.{name}"), est.converged().to_string());
    report.put(
        format!("limit.{name}"),
        est.limit.as_ref().map_or_else(|| "none".to_string(), |l| num(l[0])),
    );
    if let Some(threshold) = osc {
        report.put(format!("oscillatory.{name}"), (est.amplitude >= threshold).to_string());
    }
    Ok(est.converged())
}

// ---------------------------------------------------------------------------
// Commands

/// What a command produced: files written plus the text printed to stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub stdout: String,
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Certify { common, check, seed } => cmd_certify(&load_config(&common)?, check, seed),
        Command::Simulate { common } => cmd_simulate(&load_config(&common)?),
        Command::Sweep { common } => cmd_sweep(&load_config(&common)?),
        Command::Hopf { common } => cmd_hopf(&load_config(&common)?),
        Command::Amplitude { file, tail_fraction, tol } => cmd_amplitude(&file, tail_fraction, tol),
    }
}

fn certificate_entries(report: &mut Report, cert: &Certificate<f64>) {
    report.put_num("mu", cert.mu);
    report.put_num("u_bar", cert.u_bar);
    for (i, (a, t)) in cert.anchors.iter().zip(&cert.thetas).enumerate() {
        report.put_num(format!("anchor.{}", i + 1), *a);
        report.put_num(format!("theta.{}", i + 1), *t);
        report.put_num(format!("lambda.{}", i + 1), 1.0 / t);
    }
    report.put_num("theta_total", cert.theta_total);
    report.put_num("lambda_total", cert.lambda_total);
    report.put_num("k_smallgain", cert.k_smallgain);
    report.put_num("k_input", cert.k_input);
    report.put_num("k_max", cert.k_max);
    report.put("nothing_certified", cert.nothing_certified().to_string());
}

pub fn cmd_certify(cfg: &RunConfig, check: bool, seed: u64) -> CliResult<Outcome> {
    let n = cfg.n();
    let mut out = Outcome::default();
    let (cert, source) = match (cfg.u_bar, cfg.u_bar_range) {
        (Some(u), _) => (certify::certify(&cfg.stages, u, cfg.mu)?, "fixed"),
        (None, Some((lo, hi, points))) => (certify::optimize_ubar(&cfg.stages, cfg.mu, lo, hi, points)?.1, "optimized"),
        (None, None) => return Err(cfg_err("[certify] needs u_bar or u_bar_range")),
    };

    let mut report = Report::new("smallgain certificate");
    report.put("n_stages", n.to_string());
    report.put("u_bar_source", source);
    certificate_entries(&mut report, &cert);

    let (hinf_total, parts) = certify::cascade_hinf_gain(&cfg.stages, cert.u_bar)?;
    for (i, p) in parts.iter().enumerate() {
        report.put_num(format!("hinf_gain.{}", i + 1), p.gain);
    }
    report.put_num("hinf_gain_total", hinf_total);
    if n >= 3 {
        report.put_num("secant_margin", certify::secant_margin::<f64>(n)?);
        report.put_num("secant_relaxed_bound", certify::secant_relaxed_bound(&cert, n)?);
    } else {
        report.put("secant_margin", "n/a");
        report.put("secant_relaxed_bound", "n/a");
    }
    report.put("secant_scope", SECANT_SCOPE);

    let mut falsified = None;
    if check && !cert.nothing_certified() {
        let k = 0.95 * cert.k_max;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()).collect();
        let delay_sets = certify::standard_delay_sets::<f64>(n);
        let horizon = cfg.solver.horizon.max(10.0 * 5.0);
        let rep = certify::soundness_check(
            &cfg.stages,
            cfg.mu,
            k,
            &delay_sets,
            &states,
            cfg.solver.dt,
            horizon,
            cfg.solver.tail_fraction,
            cfg.solver.converge_tol,
        )?;
        report.put("check", if rep.passed() { "passed" } else { "failed" });
        report.put_num("check.k", k);
        report.put("check.seed", seed.to_string());
        report.put("check.runs", rep.runs.len().to_string());
        report.put_num("check.spread", rep.spread);
        for (j, r) in rep.runs.iter().enumerate() {
            let delays: Vec<String> = r.delays.iter().map(|&d| num(d)).collect();
            let x0: Vec<String> = r.x0.iter().map(|&d| num(d)).collect();
            report.put(format!("check.run.{}.delays", j + 1), delays.join(" "));
            report.put(format!("check.run.{}.x0", j + 1), x0.join(" "));
            report.put_num(format!("check.run.{}.amplitude", j + 1), r.amplitude);
            report.put(format!("check.run.{}.converged", j + 1), r.limit.is_some().to_string());
        }
        if !rep.passed() {
            falsified = Some(format!(
                "at k = {k} the runs did not settle on one limit (spread {})",
                rep.spread
            ));
        }
    } else if check {
        report.put("check", "skipped_nothing_certified");
    } else {
        report.put("check", "not_run");
    }

    let path = cfg.output.path(&cfg.output.report);
    write_file(&path, &report.render())?;
    out.files.push(path);

    if let Some((lo, hi, points)) = cfg.u_bar_range {
        let scan = certify::ubar_scan(&cfg.stages, cfg.mu, lo, hi, points)?;
        let header: Vec<String> = ["u_bar", "theta_total", "lambda_total", "k_smallgain", "k_input", "k_max"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows = scan.iter().map(|c| {
            [c.u_bar, c.theta_total, c.lambda_total, c.k_smallgain, c.k_input, c.k_max]
                .iter()
                .map(|&v| num(v))
                .collect()
        });
        let path = cfg.output.path(&cfg.output.ubar_table);
        write_file(&path, &csv_to_string(&header, rows)?)?;
        out.files.push(path);
    }

    let _ = writeln!(
        out.stdout,
        "u_bar = {}  lambda = {}  k_max = {}{}",
        cert.u_bar,
        cert.lambda_total,
        cert.k_max,
        if cert.nothing_certified() { "  (nothing certified)" } else { "" }
    );
    if let Some(msg) = falsified {
        return Err(CliError::Falsified(msg));
    }
    Ok(out)
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<Outcome> {
    let k = cfg.require_k()?;
    let model = cfg.model(k)?;
    let sim = simulate(&model, &cfg.sim_config())?;
    let n = cfg.n();
    let traj = &sim.trajectory;

    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("u_eff".into());
    let rows = (0..traj.len()).map(|j| {
        let mut row = Vec::with_capacity(n + 2);
        row.push(num(traj.time(j)));
        row.extend(traj.sample(j).iter().map(|&v| num(v)));
        row.push(num(sim.effective_input[j]));
        row
    });
    let mut out = Outcome::default();
    let path = cfg.output.path(&cfg.output.trajectory);
    write_file(&path, &csv_to_string(&header, rows)?)?;
    out.files.push(path);

    let s = &cfg.solver;
    let mut report = Report::new("smallgain simulation summary");
    report.put("n_stages", n.to_string());
    report.put_num("mu", cfg.mu);
    report.put_num("k", k);
    for (i, d) in cfg.delays.iter().enumerate() {
        report.put_num(format!("delay.{}", i + 1), *d);
    }
    report.put_num("delay.feedback", cfg.feedback_delay);
    report.put_num("dt", s.dt);
    report.put_num("horizon", s.horizon);
    report.put("samples", traj.len().to_string());
    report.put_num("tail_fraction", s.tail_fraction);
    report.put_num("converge_tol", s.converge_tol);
    report.put_num("osc_threshold", s.osc_threshold);
    let mut all_converged = true;
    for i in 0..n {
        let name = format!("x{}", i + 1);
        all_converged &= column_summary(&mut report, &name, &traj.component(i)?, s.tail_fraction, s.converge_tol, Some(s.osc_threshold))?;
    }
    column_summary(&mut report, "u_eff", &sim.effective_input_signal()?, s.tail_fraction, s.converge_tol, Some(s.osc_threshold))?;
    report.put("all_converged", all_converged.to_string());
    if all_converged {
        let est = traj.estimate_limit(s.tail_fraction, s.converge_tol)?;
        let limit = est.limit.expect("components converged");
        let residual = limit
            .iter()
            .all(|&x| x < 1.0)
            .then(|| model.equilibrium_residual(&limit))
            .transpose()?;
        report.put("equilibrium_residual", residual.map_or_else(|| "n/a".into(), num));
    }
    report.put_num("clamp.max_excursion", sim.diagnostics.max_excursion);
    report.put("clamp.flagged_steps", sim.diagnostics.flagged_steps.to_string());

    let path = cfg.output.path(&cfg.output.summary);
    write_file(&path, &report.render())?;
    out.files.push(path);
    if !sim.diagnostics.is_clean() {
        let _ = writeln!(
            out.stdout,
            "warning: {} steps clamped by more than {} (max {})",
            sim.diagnostics.flagged_steps,
            crate::dde::CLAMP_DIAGNOSTIC_THRESHOLD,
            sim.diagnostics.max_excursion
        );
    }
    let _ = writeln!(
        out.stdout,
        "k = {k}: x{n} tail amplitude {}  ({})",
        report.get(&format!("amplitude.x{n}")).unwrap_or("?"),
        if all_converged { "converged" } else { "not converged" }
    );
    Ok(out)
}

pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<Outcome> {
    let (lo, hi, points) = cfg.k_range.ok_or_else(|| cfg_err("[feedback] k_range is required for sweep"))?;
    let n = cfg.n();
    let s = &cfg.solver;
    let ks: Vec<f64> = if points == 1 {
        vec![lo]
    } else {
        (0..points)
            .map(|j| if j == points - 1 { hi } else { lo + j as f64 * (hi - lo) / (points - 1) as f64 })
            .collect()
    };
    let mut rows = Vec::with_capacity(ks.len());
    let mut out = Outcome::default();
    for &k in &ks {
        let sim = simulate(&cfg.model(k)?, &cfg.sim_config())?;
        let est = sim.component(n - 1)?.estimate_limit(s.tail_fraction, s.converge_tol)?;
        let _ = writeln!(out.stdout, "k = {k}: amplitude {:e}", est.amplitude);
        rows.push(vec![
            num(k),
            num(est.amplitude),
            est.converged().to_string(),
            est.limit.map_or_else(String::new, |l| num(l[0])),
        ]);
    }
    let header = vec![
        "k".to_string(),
        format!("amplitude_x{n}"),
        "converged".to_string(),
        format!("limit_x{n}"),
    ];
    let path = cfg.output.path(&cfg.output.sweep);
    write_file(&path, &csv_to_string(&header, rows)?)?;
    out.files.push(path);
    Ok(out)
}

pub fn cmd_hopf(cfg: &RunConfig) -> CliResult<Outcome> {
    let (k_lo, k_hi) = cfg
        .hopf_bracket
        .ok_or_else(|| cfg_err("[feedback] hopf_bracket is required for hopf"))?;
    let template = cfg.model(cfg.k.unwrap_or(0.0))?;
    let s = &cfg.solver;
    let bracket = certify::find_hopf_onset(
        &template,
        &cfg.sim_config(),
        k_lo,
        k_hi,
        s.osc_threshold,
        cfg.hopf_tol,
        s.tail_fraction,
    )?;
    let mut report = Report::new("smallgain hopf onset");
    report.put_num("onset", bracket.onset);
    report.put_num("bracket_lo", bracket.k_lo);
    report.put_num("bracket_hi", bracket.k_hi);
    report.put_num("search_lo", k_lo);
    report.put_num("search_hi", k_hi);
    report.put_num("tol_k", cfg.hopf_tol);
    report.put_num("osc_threshold", s.osc_threshold);
    report.put_num("tail_fraction", s.tail_fraction);
    report.put("evaluations", bracket.evaluations.len().to_string());
    for (j, (k, a)) in bracket.evaluations.iter().enumerate() {
        report.put(format!("eval.{}", j + 1), format!("{} {}", num(*k), num(*a)));
    }
    let mut out = Outcome::default();
    let path = cfg.output.path(&cfg.output.hopf);
    write_file(&path, &report.render())?;
    out.files.push(path);
    let _ = writeln!(out.stdout, "onset k = {} in [{}, {}]", bracket.onset, bracket.k_lo, bracket.k_hi);
    Ok(out)
}

/// Reads a trajectory CSV back into one scalar signal per data column.
pub fn read_trajectory(path: &Path) -> CliResult<Vec<(String, SampledSignal<f64>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
        return Err(CliError::Parse("trajectory header must start with t and name at least one column".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse(e.to_string()))?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("row {}: {field:?} is not a number", line + 2)))?;
            col.push(v);
        }
    }
    let times = &columns[0];
    if times.len() < 2 {
        return Err(CliError::Parse("trajectory needs at least two rows".into()));
    }
    let (t0, dt) = (times[0], times[1] - times[0]);
    header[1..]
        .iter()
        .zip(columns[1..].iter())
        .map(|(name, col)| {
            let sig = SampledSignal::from_scalar(t0, dt, col.clone()).map_err(|e| CliError::Parse(format!("column {name}: {e}")))?;
            Ok((name.clone(), sig))
        })
        .collect()
}

pub fn cmd_amplitude(file: &Path, tail_fraction: f64, tol: f64) -> CliResult<Outcome> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(cfg_err(format!("--tail-fraction must lie in (0, 1], got {tail_fraction}")));
    }
    if !(tol > 0.0) {
        return Err(cfg_err(format!("--tol must be positive, got {tol}")));
    }
    let columns = read_trajectory(file)?;
    let mut report = Report::new("smallgain amplitude");
    report.put_num("tail_fraction", tail_fraction);
    report.put_num("tol", tol);
    for (name, sig) in &columns {
        column_summary(&mut report, name, sig, tail_fraction, tol, None)?;
    }
    Ok(Outcome { files: Vec::new(), stdout: report.render() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_the_mapk_cascade() {
        let cfg = RunConfig::bundled();
        assert_eq!(cfg.n(), 3);
        let p: Vec<[f64; 4]> = cfg.stages.iter().map(|s| [s.b(), s.c(), s.d(), s.e()]).collect();
        assert_eq!(p, vec![[0.1, 0.1, 1.0, 0.1], [0.1, 0.01, 1.0, 0.01], [0.5, 0.01, 1.0, 0.01]]);
        assert_eq!(cfg.mu, 0.3);
        assert_eq!(cfg.u_bar, Some(0.061));
        assert_eq!(cfg.solver.history, vec![0.0; 3]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = BUNDLED_CONFIG.replace("horizon = 2000.0", "horizn = 2000.0");
        let err = RunConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.to_string().contains("horizn"), "{err}");
        let text = BUNDLED_CONFIG.replace("[output]", "[outptu]");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains("outptu"));
        let text = BUNDLED_CONFIG.replacen("e = 0.1", "e = 0.1\nf = 2.0", 1);
        assert!(RunConfig::parse(&text).unwrap_err().to_string().contains('f'));
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("mu = 0.3", "mu = 0.0"),
            ("b = 0.5", "b = -0.5"),
            ("inter_stage = [0.0, 0.0]", "inter_stage = [0.0]"),
            ("x0 = [0.0, 0.0, 0.0]", "x0 = [0.0, 2.0, 0.0]"),
            ("[stage.3]", "[stage.4]"),
            ("tail_fraction = 0.2", "tail_fraction = 0.0"),
            ("k_points = 7", "k_points = 1"),
        ] {
            let text = BUNDLED_CONFIG.replace(from, to);
            assert!(RunConfig::parse(&text).is_err(), "{to} accepted");
        }
    }

    #[test]
    fn report_round_trip() {
        let mut r = Report::new("t");
        r.put_num("a", 0.1);
        r.put("b", "linearized, delay-free, local");
        let back = Report::parse(&r.render()).unwrap();
        assert_eq!(back.get("a").unwrap().parse::<f64>().unwrap(), 0.1);
        assert_eq!(back.get("b"), Some("linearized, delay-free, local"));
        assert_eq!(back.render(), r.render());
    }

    #[test]
    fn numbers_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 4.25e-18, 2000.0, 0.0, 0.061] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Core(Error::Numerical("x".into())).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::Core(Error::Config("x".into())).exit_code(), EXIT_CONFIG);
        assert_eq!(CliError::Falsified("x".into()).exit_code(), EXIT_FALSIFIED);
        assert_eq!(CliError::Parse("x".into()).exit_code(), EXIT_CONFIG);
    }
}
