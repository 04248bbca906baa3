//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | success |
//! | 1    | runtime failure (i/o, blow-up of a single path, ...) |
//! | 2    | config or argument error |
//! | 3    | inadmissible coefficient set |
//! | 4    | resume mismatch |
//! | 5    | diagnostic violation |
//! | 130  | interrupted, checkpoint written |

mod simulate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::harness::output::{write_csv, write_json, write_atomic};
use crate::harness::{
    estimate_fbar_replicates, hex_digest, measure_auxiliary_gap, measure_moment_bounds, measure_time_increments,
    probe_ergodicity, resolve_fbar, run_convergence_study, verify_appendix_inequalities, ExperimentConfig,
    HarnessError, InequalityReport, CODE_VERSION,
};
use crate::dynamics::FbarMode;
use crate::spectral::snapshot::write_snapshot;
use crate::spectral::SpectralField;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INADMISSIBLE: i32 = 3;
pub const EXIT_RESUME: i32 = 4;
pub const EXIT_VIOLATION: i32 = 5;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Parser, Debug)]
#[command(name = "slowfast-nse", version, about = "Slow-fast stochastic Navier-Stokes simulator and averaging diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Strong convergence study of the slow component over the ε sweep.
    Converge(Common),
    /// One coupled path, with optional checkpointing.
    Simulate(SimulateArgs),
    /// Replicated estimate of the averaged drift at the initial slow state.
    Fbar(Common),
    /// Exponential-ergodicity probe of the frozen fast equation.
    Ergodicity(Common),
    /// Numeric probes of the supporting estimates.
    #[command(subcommand)]
    Diag(DiagCommand),
}

#[derive(Subcommand, Debug)]
enum DiagCommand {
    Increments(Common),
    Auxgap(Common),
    Moments(Common),
    Inequalities(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON config file; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set coefficients.params.kappa=0.5`.
    /// The value is parsed as JSON, falling back to a plain string.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Comma-separated ε list.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifact file stem (overrides `output.prefix`).
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Total number of steps; defaults to the time grid of the first ε.
    #[arg(long)]
    steps: Option<u64>,
    /// Sample index selecting the noise streams.
    #[arg(long, default_value_t = 0)]
    sample: u64,
    /// Write a checkpoint every K steps (also on SIGINT/SIGTERM).
    #[arg(long, value_name = "K")]
    checkpoint_every: Option<u64>,
    /// Continue from a checkpoint sidecar (`*.ckpt.json`).
    #[arg(long, value_name = "CHECKPOINT")]
    resume: Option<PathBuf>,
}

/// Written next to the artifacts of every run that got past config loading.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    /// SHA-256 of the config bytes consumed (empty input without `--config`).
    pub config_hash: String,
    /// Hash of the effective config after overrides.
    pub effective_config_hash: String,
    pub overrides: Vec<String>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub artifacts: Vec<String>,
    pub exit_status: i32,
    pub message: Option<String>,
    pub code_version: String,
}

#[derive(Debug)]
pub(crate) enum CliError {
    Config(String),
    Harness(HarnessError),
    Resume(String),
    Interrupted(Vec<PathBuf>),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Harness(HarnessError::Parse { .. } | HarnessError::Config(_)) => EXIT_CONFIG,
            CliError::Harness(HarnessError::Inadmissible { .. }) => EXIT_INADMISSIBLE,
            CliError::Harness(_) => EXIT_FAILURE,
            CliError::Resume(_) => EXIT_RESUME,
            CliError::Interrupted(_) => EXIT_INTERRUPTED,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Resume(m) => m.clone(),
            CliError::Harness(e) => e.to_string(),
            CliError::Interrupted(_) => "interrupted; checkpoint written".into(),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Harness(e)
    }
}

/// Artifacts produced by a command and, when a diagnostic failed, why.
#[derive(Default)]
pub(crate) struct Outcome {
    artifacts: Vec<PathBuf>,
    violation: Option<String>,
}

pub(crate) struct Context {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    pub prefix: String,
}

impl Context {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.prefix))
    }
}

#[derive(Serialize)]
struct Sidecar<'a, R: Serialize> {
    command: &'a str,
    config: &'a ExperimentConfig,
    report: &'a R,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(m) = init_threads() {
        eprintln!("error: {m}");
        return EXIT_CONFIG;
    }
    let (name, common) = match &cli.command {
        Command::Converge(c) => ("converge", c),
        Command::Simulate(s) => ("simulate", &s.common),
        Command::Fbar(c) => ("fbar", c),
        Command::Ergodicity(c) => ("ergodicity", c),
        Command::Diag(DiagCommand::Increments(c)) => ("diag-increments", c),
        Command::Diag(DiagCommand::Auxgap(c)) => ("diag-auxgap", c),
        Command::Diag(DiagCommand::Moments(c)) => ("diag-moments", c),
        Command::Diag(DiagCommand::Inequalities(c)) => ("diag-inequalities", c),
    };
    let started_at = now();
    let (bytes, cfg) = match load_config(common) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return e.exit_code();
        }
    };
    let dir = common.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let prefix = common.prefix.clone().or_else(|| cfg.output.prefix.clone()).unwrap_or_else(|| name.to_string());
    let ctx = Context { cfg, dir, prefix };

    let result = match &cli.command {
        Command::Converge(_) => cmd_converge(&ctx, name),
        Command::Simulate(s) => simulate::cmd_simulate(&ctx, name, s.steps, s.sample, s.checkpoint_every, s.resume.as_deref()),
        Command::Fbar(_) => cmd_fbar(&ctx, name),
        Command::Ergodicity(_) => cmd_ergodicity(&ctx, name),
        Command::Diag(d) => cmd_diag(&ctx, name, d),
    };
    let (code, message, artifacts) = match result {
        Ok(o) => match o.violation {
            Some(v) => (EXIT_VIOLATION, Some(v), o.artifacts),
            None => (EXIT_OK, None, o.artifacts),
        },
        Err(e) => {
            let artifacts = match &e {
                CliError::Interrupted(a) => a.clone(),
                _ => Vec::new(),
            };
            (e.exit_code(), Some(e.message()), artifacts)
        }
    };
    if let Some(m) = &message {
        eprintln!("{}: {m}", if code == EXIT_VIOLATION { "violation" } else { "error" });
    }
    let manifest = RunManifest {
        command: name.to_string(),
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        config_hash: hex_digest(&bytes),
        effective_config_hash: ctx.cfg.hash(),
        overrides: common.set.clone(),
        started_at,
        finished_at: now(),
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
        exit_status: code,
        message,
        code_version: CODE_VERSION.to_string(),
    };
    if let Err(e) = write_json(&ctx.path(".manifest.json"), &manifest) {
        eprintln!("error: {e}");
        return if code == EXIT_OK { EXIT_FAILURE } else { code };
    }
    for a in &manifest.artifacts {
        println!("{a}");
    }
    code
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("NSE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("NSE_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("NSE_THREADS must be a positive integer, got `0`".into());
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Reads the config file, applies overrides, returns the consumed bytes and
/// the effective config.
fn load_config(c: &Common) -> Result<(Vec<u8>, ExperimentConfig), CliError> {
    let bytes = match &c.config {
        Some(p) => std::fs::read(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let text = if bytes.is_empty() {
        "{}".to_string()
    } else {
        String::from_utf8(bytes.clone()).map_err(|_| CliError::Config("config is not valid UTF-8".into()))?
    };
    let mut cfg = ExperimentConfig::from_json_str(&text)?;
    if !c.set.is_empty() {
        let mut value = serde_json::to_value(&cfg).expect("config serialises");
        for s in &c.set {
            apply_override(&mut value, s)?;
        }
        cfg = serde_json::from_value(value).map_err(|e| CliError::Config(format!("after overrides: {e}")))?;
    }
    if let Some(eps) = &c.eps {
        cfg.eps = eps.clone();
    }
    if let Some(m) = c.samples {
        cfg.samples = m;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok((bytes, cfg))
}

/// `a.b.c=value` into a JSON tree, creating objects along the way.
pub(crate) fn apply_override(root: &mut Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form PATH=VALUE")))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override `{item}` has an empty path segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in path.split('.') {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        node = node.as_object_mut().expect("object").entry(key.to_string()).or_insert(Value::Null);
    }
    *node = value;
    Ok(())
}

fn sidecar<R: Serialize>(ctx: &Context, command: &str, report: &R) -> Result<PathBuf, CliError> {
    let path = ctx.path(".json");
    write_json(&path, &Sidecar { command, config: &ctx.cfg, report })?;
    Ok(path)
}

pub(crate) fn snapshot_bytes(fields: &[SpectralField]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_snapshot(&mut buf, fields).map_err(|e| CliError::Harness(HarnessError::Other(e.to_string())))?;
    Ok(buf)
}

pub(crate) fn write_snapshot_file(path: &Path, fields: &[SpectralField]) -> Result<(), CliError> {
    write_atomic(path, &snapshot_bytes(fields)?)?;
    Ok(())
}

fn cmd_converge(ctx: &Context, name: &str) -> Result<Outcome, CliError> {
    let report = run_convergence_study(&ctx.cfg)?;
    let csv = ctx.path(".csv");
    write_csv(&csv, &report.rows)?;
    let json = sidecar(ctx, name, &report)?;
    let bad: Vec<String> = report.rows.iter().filter(|r| !r.usable).map(|r| r.eps.to_string()).collect();
    let violation = (!bad.is_empty()).then(|| format!("attrition above 10% at eps = {}", bad.join(", ")));
    Ok(Outcome { artifacts: vec![csv, json], violation })
}

#[derive(Serialize)]
struct FbarRow {
    mode: &'static str,
    replicates: usize,
    mean_norm: f64,
    total_variance: f64,
    stderr: f64,
    error: Option<f64>,
    within_3se: Option<bool>,
    root_seed: u64,
}

fn mode_name(mode: &FbarMode) -> &'static str {
    match mode {
        FbarMode::ClosedForm => "closed_form",
        FbarMode::TimeAverage { .. } => "time_average",
        FbarMode::WarmStart { .. } => "warm_start",
    }
}

fn cmd_fbar(ctx: &Context, name: &str) -> Result<Outcome, CliError> {
    let model = ctx.cfg.model()?;
    let mode = resolve_fbar(&ctx.cfg, &model)?;
    let space = model.slow_cov().space().clone();
    let (x, _) = ctx.cfg.initial_data(&space);
    let r = estimate_fbar_replicates(&model, &x, mode, ctx.cfg.diagnostics.fbar.replicates, ctx.cfg.seed)?;
    let nsef = ctx.path(".nsef");
    write_snapshot_file(&nsef, std::slice::from_ref(&r.mean))?;
    let csv = ctx.path(".csv");
    write_csv(
        &csv,
        &[FbarRow {
            mode: mode_name(&r.mode),
            replicates: r.replicates,
            mean_norm: r.mean_norm,
            total_variance: r.total_variance,
            stderr: r.stderr,
            error: r.error,
            within_3se: r.within_3se,
            root_seed: r.root_seed,
        }],
    )?;
    let json = sidecar(ctx, name, &r)?;
    let violation = (r.within_3se == Some(false)).then(|| {
        format!("estimate differs from the closed form by {} (> 3 x stderr {})", r.error.unwrap_or(f64::NAN), r.stderr)
    });
    Ok(Outcome { artifacts: vec![nsef, csv, json], violation })
}

#[derive(Serialize)]
struct GapRow {
    t: f64,
    mean_gap: f64,
    stderr_gap: f64,
    root_seed: u64,
}

fn cmd_ergodicity(ctx: &Context, name: &str) -> Result<Outcome, CliError> {
    let model = ctx.cfg.model()?;
    let space = model.slow_cov().space().clone();
    let (x, y) = ctx.cfg.initial_data(&space);
    let r = probe_ergodicity(&model, &x, &y, &SpectralField::zeros(&space), &ctx.cfg.diagnostics.ergodicity, ctx.cfg.seed)?;
    let rows: Vec<GapRow> = (0..r.times.len())
        .map(|i| GapRow { t: r.times[i], mean_gap: r.mean_gap[i], stderr_gap: r.stderr_gap[i], root_seed: r.root_seed })
        .collect();
    let csv = ctx.path(".csv");
    write_csv(&csv, &rows)?;
    let json = sidecar(ctx, name, &r)?;
    let violation = (!r.passed()).then(|| "no positive decay rate of the frozen-equation gap".to_string());
    Ok(Outcome { artifacts: vec![csv, json], violation })
}

#[derive(Serialize)]
struct InequalityRow {
    n: usize,
    eps: f64,
    pairs: usize,
    coercivity_c_eps: f64,
    coercivity_c_analytic: f64,
    coercivity_c_fit: f64,
    coercivity_checked: usize,
    coercivity_violations: usize,
    monotonicity_c_fit: f64,
    monotonicity_c_lipschitz: f64,
    monotonicity_threshold: f64,
    monotonicity_checked: usize,
    monotonicity_violations: usize,
    root_seed: u64,
}

impl From<&InequalityReport> for InequalityRow {
    fn from(r: &InequalityReport) -> Self {
        Self {
            n: r.n,
            eps: r.eps,
            pairs: r.pairs,
            coercivity_c_eps: r.coercivity.c_eps,
            coercivity_c_analytic: r.coercivity.c_analytic,
            coercivity_c_fit: r.coercivity.c_fit,
            coercivity_checked: r.coercivity.checked,
            coercivity_violations: r.coercivity.violations,
            monotonicity_c_fit: r.monotonicity.c_fit,
            monotonicity_c_lipschitz: r.monotonicity.c_lipschitz,
            monotonicity_threshold: r.monotonicity.threshold,
            monotonicity_checked: r.monotonicity.checked,
            monotonicity_violations: r.monotonicity.violations,
            root_seed: r.root_seed,
        }
    }
}

fn cmd_diag(ctx: &Context, name: &str, which: &DiagCommand) -> Result<Outcome, CliError> {
    let cfg = &ctx.cfg;
    let csv = ctx.path(".csv");
    let (json, violation) = match which {
        DiagCommand::Increments(_) => {
            let r = measure_time_increments(cfg, &cfg.diagnostics.increments.delta_fractions)?;
            write_csv(&csv, &r.rows)?;
            let v = (!r.passed()).then(|| format!("monotone = {}, slope = {:?} (need >= 0.4)", r.monotone, r.slope));
            (sidecar(ctx, name, &r)?, v)
        }
        DiagCommand::Auxgap(_) => {
            let r = measure_auxiliary_gap(cfg)?;
            write_csv(&csv, &r.rows)?;
            let v = (!r.passed()).then(|| format!("y gap monotone = {}, x gap monotone = {}", r.y_monotone, r.x_monotone));
            (sidecar(ctx, name, &r)?, v)
        }
        DiagCommand::Moments(_) => {
            let r = measure_moment_bounds(cfg, &cfg.diagnostics.moments.p)?;
            write_csv(&csv, &r.rows)?;
            let v = (!r.passed()).then(|| format!("moment ratio above {} across the eps sweep", r.max_ratio));
            (sidecar(ctx, name, &r)?, v)
        }
        DiagCommand::Inequalities(_) => {
            let model = cfg.model()?;
            let ic = &cfg.diagnostics.inequalities;
            let r = verify_appendix_inequalities(&model, ic.eps, ic, cfg.seed)?;
            write_csv(&csv, &[InequalityRow::from(&r)])?;
            let v = (!r.passed()).then(|| {
                format!(
                    "{} violations ({} coercivity, {} monotonicity)",
                    r.violations(),
                    r.coercivity.violations,
                    r.monotonicity.violations
                )
            });
            (sidecar(ctx, name, &r)?, v)
        }
    };
    Ok(Outcome { artifacts: vec![csv, json], violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_nested_objects() {
        let mut v = json!({"coefficients": {"name": "x", "params": null}});
        apply_override(&mut v, "coefficients.params.kappa=0.5").unwrap();
        apply_override(&mut v, "coefficients.name=saturating").unwrap();
        assert_eq!(v, json!({"coefficients": {"name": "saturating", "params": {"kappa": 0.5}}}));
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let parse = CliError::Harness(HarnessError::Parse { line: 1, column: 2, message: "x".into() });
        assert_eq!(parse.exit_code(), EXIT_CONFIG);
        let bad = CliError::Harness(HarnessError::Inadmissible { name: "s".into(), margin: -1.0 });
        assert_eq!(bad.exit_code(), EXIT_INADMISSIBLE);
        assert!(bad.message().contains("margin -1"));
        assert_eq!(CliError::Resume("n".into()).exit_code(), EXIT_RESUME);
    }
}
