//! Command-line front end: `analytic`, `simulate`, `sweep` and `validate`.
//!
//! Settings are flat `key=value` pairs. They come from built-in defaults,
//! then `--config` (TOML, or a CSV previously written by this tool, whose
//! `# key=value` header is read back), then each `--set`, then the
//! dedicated flags. Physical quantities carry unit suffixes.

mod config;
mod output;
mod units;
mod validate;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{key_names, Overrides, RunConfig};
pub use units::{parse_quantity, Dimension};

use crate::experiments::{self, Engines, DISCREPANCY_FLAG};
use crate::propagator::{self, PropagationSettings};
use crate::spin::{Projection, SpinSystem};
use crate::Error;
use output::{opt_sci, sci, write_csv, write_svg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_INTEGRATOR: i32 = 4;

/// A failure carrying the process exit code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(key: &str, reason: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: format!("config error in `{key}`: {reason}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => CliError::config(name, reason),
            Error::StepSizeUnderflow { .. } | Error::SingularStage { .. } | Error::ZeroField { .. } => CliError {
                code: EXIT_INTEGRATOR,
                message: format!("integrator failure: {e}"),
            },
            other => CliError {
                code: EXIT_CONFIG,
                message: other.to_string(),
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "majorana", version, about = "Majorana spin-flip transitions in a reversing magnetic field")]
pub struct Args {
    #[command(subcommand)]
    command: Command,
    /// Configuration file: TOML, or a CSV written by this tool.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output CSV (default: stdout).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Optional SVG plot.
    #[arg(long, global = true, value_name = "PATH")]
    plot: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    engines: Option<EngineArg>,
    /// Initial magnetic quantum number, e.g. `2` or `-1/2`.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "M")]
    m0: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Closed-form populations for every τ_i.
    Analytic,
    /// Numeric time trace for a single field ramp.
    Simulate,
    /// τ_i sweep through both engines, with a discrepancy report.
    Sweep,
    /// Built-in invariant suite.
    Validate,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EngineArg {
    Analytic,
    Numeric,
    Both,
}

/// Runs the tool on `argv` and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut overrides = Overrides::default();
    if let Some(path) = &args.config {
        overrides.load_file(path)?;
    }
    for assignment in &args.set {
        overrides.push_assignment(assignment)?;
    }
    if let Some(engines) = args.engines {
        let name = match engines {
            EngineArg::Analytic => "analytic",
            EngineArg::Numeric => "numeric",
            EngineArg::Both => "both",
        };
        overrides.push("engines", name);
    }
    if let Some(m0) = &args.m0 {
        overrides.push("m0", m0.as_str());
    }
    if let Some(out) = &args.out {
        overrides.push("out", out.display().to_string());
    }
    if let Some(plot) = &args.plot {
        overrides.push("plot", plot.display().to_string());
    }
    RunConfig::resolve(&overrides)
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let cfg = resolve(args)?;
    match args.command {
        Command::Analytic => cmd_analytic(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Validate => cmd_validate(&cfg),
    }
}

fn population_label(m: Projection) -> String {
    let sign = if m.twice() < 0 { "m" } else { "" };
    let abs = Projection::from_twice(m.twice().abs());
    format!("p_m{sign}{}", abs.to_string().replace('/', "_"))
}

fn report_point_errors(records: &[experiments::SweepRecord]) {
    for r in records {
        if let Some(e) = &r.error {
            eprintln!("warning: tau_i = {} s: {e}", r.tau_i);
        } else if !r.reverses {
            eprintln!("warning: tau_i = {} s: the field does not reverse; population stays in m0", r.tau_i);
        }
    }
}

fn cmd_analytic(cfg: &RunConfig) -> Result<i32, CliError> {
    let mut sweep = cfg.sweep.clone();
    sweep.engines = Engines::AnalyticOnly;
    let result = experiments::sweep_tau_i(&sweep)?;
    let sys = sweep.sys;
    let header = ["tau_i_s", "m", "probability", "theta_rad", "flip_p", "f_rot_hz", "window_s"].map(String::from);
    let mut rows = Vec::new();
    for r in &result.records {
        // A non-reversing point is the identity: no flip, θ = 0.
        let (theta, flip) = if r.reverses { (r.theta, r.flip_p) } else { (Some(0.0), Some(0.0)) };
        for (idx, m) in sys.projections().enumerate() {
            rows.push(vec![
                sci(r.tau_i),
                m.to_string(),
                opt_sci(r.analytic.as_ref().map(|p| p[idx])),
                opt_sci(theta),
                opt_sci(flip),
                opt_sci(r.f_rot_at_reversal),
                opt_sci(r.window),
            ]);
        }
    }
    write_csv(cfg.out.as_deref(), &cfg.echo(), &header, &rows)?;
    report_point_errors(&result.records);
    if result.all_degenerate() {
        eprintln!("error: no point has a field reversal");
        return Ok(EXIT_DEGENERATE);
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<i32, CliError> {
    let result = experiments::sweep_tau_i(&cfg.sweep)?;
    let sys = cfg.sweep.sys;
    let header = ["tau_i_s", "m", "p_analytic", "p_numeric", "abs_diff"].map(String::from);
    let mut rows = Vec::new();
    for r in &result.records {
        for (idx, m) in sys.projections().enumerate() {
            let a = r.analytic.as_ref().map(|p| p[idx]);
            let n = r.numeric.as_ref().map(|p| p[idx]);
            let diff = a.zip(n).map(|(a, n)| (a - n).abs());
            rows.push(vec![sci(r.tau_i), m.to_string(), opt_sci(a), opt_sci(n), opt_sci(diff)]);
        }
    }
    write_csv(cfg.out.as_deref(), &cfg.echo(), &header, &rows)?;
    report_point_errors(&result.records);

    if cfg.sweep.engines == Engines::Both {
        eprintln!("{:>14}  {:>12}  flag", "tau_i [us]", "max |diff|");
        let mut worst = 0.0_f64;
        for r in &result.records {
            let diff = r.discrepancy();
            worst = worst.max(diff.unwrap_or(0.0));
            let flagged = r.error.is_some() || diff.is_some_and(|d| d > DISCREPANCY_FLAG);
            eprintln!(
                "{:>14.4}  {:>12}  {}",
                r.tau_i * 1e6,
                diff.map_or("-".into(), |d| format!("{d:.3e}")),
                if flagged { "FLAGGED" } else { "ok" }
            );
        }
        eprintln!("max discrepancy {worst:.3e} (flag above {DISCREPANCY_FLAG:e})");
    }
    if cfg.sweep.engines.numeric() {
        eprintln!("worst norm drift {:.3e}", result.worst_norm_drift());
    }
    if result.all_degenerate() {
        eprintln!("error: no point has a usable field reversal");
        return Ok(EXIT_DEGENERATE);
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<i32, CliError> {
    let sys: SpinSystem = cfg.sweep.sys;
    let model = cfg
        .trace
        .model
        .ok_or_else(|| CliError::config("f_rot", "simulate needs `f_rot` or `c_z`"))?;
    let numeric = &cfg.sweep.numeric;
    let (t_start, t_end) = match (cfg.trace.t_start, cfg.trace.t_end) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let (w0, w1) = propagator::adiabatic_window(&sys, &model, numeric.adiabaticity)?;
            (a.unwrap_or(w0), b.unwrap_or(w1))
        }
    };
    let settings = PropagationSettings {
        rel_tol: numeric.rel_tol,
        abs_tol: numeric.abs_tol,
        t_start,
        t_end,
        max_step: numeric.max_step,
        larmor_resolution: numeric.larmor_resolution,
        basis_out: cfg.trace.basis,
    };
    let trace = propagator::time_trace(&sys, &model, cfg.sweep.m0, &settings, cfg.trace.samples)?;

    let mut header: Vec<String> = ["t_s", "B_y_T", "B_z_T"].map(String::from).to_vec();
    header.extend(sys.projections().map(population_label));
    let rows: Vec<Vec<String>> = trace
        .times
        .iter()
        .zip(&trace.field_snapshots)
        .zip(&trace.populations)
        .map(|((t, b), pops)| {
            let mut row = vec![sci(*t), sci(b[1]), sci(b[2])];
            row.extend(pops.iter().map(|p| sci(*p)));
            row
        })
        .collect();
    write_csv(cfg.out.as_deref(), &cfg.echo(), &header, &rows)?;

    if let Some(path) = &cfg.plot {
        let times_us: Vec<f64> = trace.times.iter().map(|t| t * 1e6).collect();
        let series: Vec<(String, Vec<f64>)> = sys
            .projections()
            .enumerate()
            .map(|(i, m)| (format!("m = {m}"), trace.populations.iter().map(|p| p[i]).collect()))
            .collect();
        let title = match model.rotation_frequency(model.reversal().map(|r| r.time).unwrap_or(t_start)) {
            Ok(f_rot) => format!("populations, f_Rot = {:.3} MHz at the reversal", f_rot / 1e6),
            Err(_) => "populations".to_string(),
        };
        write_svg(path, &title, "t [µs]", &times_us, &series)?;
    }
    if let Ok(window) = crate::analytic::transition_window(&sys, &model) {
        let basis = match cfg.trace.basis {
            crate::propagator::Basis::LabZ => "lab_z",
            crate::propagator::Basis::FieldAligned => "field_aligned",
        };
        eprintln!(
            "transition window {:.4} us, activity window ({basis} populations) {:.4} us",
            window * 1e6,
            trace.activity_window(0.05) * 1e6
        );
    }
    eprintln!("worst norm drift {:.3e}", trace.diagnostics.worst_norm_drift);
    Ok(EXIT_OK)
}

fn cmd_validate(cfg: &RunConfig) -> Result<i32, CliError> {
    let checks = validate::run_suite(cfg);
    println!("{:<40} {:>12} {:>10}  result", "check", "value", "tolerance");
    let mut all = true;
    for c in &checks {
        all &= c.passed();
        let value = match &c.error {
            Some(_) => "error".to_string(),
            None => format!("{:.3e}", c.value),
        };
        println!(
            "{:<40} {:>12} {:>10.1e}  {}",
            c.name,
            value,
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        );
        if let Some(e) = &c.error {
            println!("    {e}");
        }
    }
    Ok(if all { EXIT_OK } else { EXIT_VALIDATION })
}
