//! Command-line entry point.

use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use log::{error, info};

use super::config::{parse_levels, RunConfig};
use super::output::{convergence_csv_and_markdown, stability_markdown, write_functional_log};
use super::sweep::{run_stability_sweep, run_sweep, LevelRun};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Robin-Robin splitting convergence and stability sweeps.
#[derive(Parser, Debug)]
#[command(name = "rrsplit", version)]
struct Args {
    /// TOML run description; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Refinement levels k (h = Δt = 2⁻ᵏ), e.g. `5,6,7` or `4..8`.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    degree: Option<usize>,
    /// `horizontal:<y0>` or `slanted:<yL>,<yR>`.
    #[arg(long)]
    interface: Option<String>,
    /// `splitting` or `monolithic`.
    #[arg(long)]
    scheme: Option<String>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail when an energy-identity residual exceeds 1e-9.
    #[arg(long)]
    check_identity: bool,
    /// Stability run with a named residual injection (none, sources, interface, all).
    #[arg(long)]
    inject: Option<String>,
}

fn apply(args: &Args) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &args.levels {
        c.levels = parse_levels(s)?;
    }
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(d) = args.degree {
        c.degree = d;
    }
    if let Some(s) = &args.interface {
        c.interface = s.parse()?;
    }
    if let Some(s) = &args.scheme {
        c.scheme = s.parse()?;
    }
    if let Some(p) = &args.out {
        c.outputs.csv = Some(p.clone());
    }
    c.outputs.check_identity |= args.check_identity;
    if let Some(s) = &args.inject {
        c.injection = Some(s.parse()?);
    }
    c.validate()?;
    Ok(c)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Runs the configured sweep, writing tables to `out` and diagnostics to `err`.
pub fn run_config(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut code = EXIT_OK;
    let mut fail = |level: u32, e: &Error, err: &mut dyn Write| {
        error!("level {level}: {e}");
        let _ = writeln!(err, "level {level} failed: {e}");
        code = code.max(exit_code(e));
    };

    if config.injection.is_some() {
        let mut runs = Vec::new();
        for (k, r) in run_stability_sweep(config) {
            match r {
                Ok(run) => runs.push(run),
                Err(e) => fail(k, &e, err),
            }
        }
        if !runs.is_empty() {
            let _ = write!(out, "{}", stability_markdown(&runs));
            if let Some(path) = &config.outputs.functional_log {
                let logs: Vec<_> = runs.iter().map(|r| (r.level, r.functionals.as_slice())).collect();
                if let Err(e) = write_functional_log(path, &logs) {
                    fail(0, &e, err);
                }
            }
        }
        return code;
    }

    let mut runs: Vec<LevelRun> = Vec::new();
    for (k, r) in run_sweep(config) {
        match r {
            Ok(run) => {
                if let Some(res) = run.max_identity_residual {
                    info!("level {k}: max identity residual {res:.3e}");
                    let _ = writeln!(err, "level {k}: max identity residual {res:.3e}");
                }
                runs.push(run);
            }
            Err(e) => fail(k, &e, err),
        }
    }
    if runs.is_empty() {
        return code;
    }
    match convergence_csv_and_markdown(&runs, config) {
        Ok(md) => {
            if config.outputs.markdown {
                let _ = write!(out, "{md}");
            }
        }
        Err(e) => {
            let _ = writeln!(err, "{e}");
            code = code.max(EXIT_CONFIG);
        }
    }
    if let Some(path) = &config.outputs.functional_log {
        let logs: Vec<_> = runs.iter().map(|r| (r.level, r.functionals.as_slice())).collect();
        if let Err(e) = write_functional_log(path, &logs) {
            let _ = writeln!(err, "{e}");
            code = code.max(EXIT_CONFIG);
        }
    }
    code
}

/// Parses `argv` (without the program name) and runs.
pub fn cli_main<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    if argv.is_empty() {
        let _ = writeln!(err, "{}", Args::command().render_help());
        return EXIT_CONFIG;
    }
    let args = match Args::try_parse_from(std::iter::once("rrsplit".into()).chain(argv)) {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(err, "{e}");
            return EXIT_CONFIG;
        }
    };
    match apply(&args) {
        Ok(config) => run_config(&config, out, err),
        Err(e) => {
            let _ = writeln!(err, "{e}");
            let _ = writeln!(err, "{}", Args::command().render_usage());
            EXIT_CONFIG
        }
    }
}
