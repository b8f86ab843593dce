//! CSV and markdown emission.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::sweep::{ConvergenceRow, LevelRun, StabilityRun};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 15] = [
    "level", "dt", "h", "e_u", "rate_u", "e_1u", "rate_1u", "e_2u", "rate_2u", "e_lambda", "rate_lambda", "e_1lambda", "rate_1lambda", "e_1u_H2", "rate_1u_H2",
];

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.level.to_string(), sci(Some(r.dt)), sci(Some(r.h))];
        for j in 0..6 {
            rec.push(sci(r.errors[j]));
            rec.push(sci(r.rates[j]));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ConvergenceRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

pub fn emit_csv(rows: &[ConvergenceRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no rows to write".into()));
    }
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

fn dt_label(level: u32) -> String {
    format!("1/{}", 1u64 << level)
}

fn cell_err(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2e}"))
}

fn cell_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn table(out: &mut String, rows: &[ConvergenceRow], cols: [(usize, &str); 3]) {
    let _ = writeln!(out, "| Δt = h | {} | rate | {} | rate | {} | rate |", cols[0].1, cols[1].1, cols[2].1);
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for r in rows {
        let _ = write!(out, "| {} |", dt_label(r.level));
        for (j, _) in cols {
            let _ = write!(out, " {} | {} |", cell_err(r.errors[j]), cell_rate(r.rates[j]));
        }
        out.push('\n');
    }
}

/// Two tables: the solution errors, then the multiplier and H² errors.
pub fn emit_markdown(rows: &[ConvergenceRow]) -> String {
    let mut s = String::new();
    table(&mut s, rows, [(0, "e_u"), (1, "e_1u"), (2, "e_2u")]);
    s.push('\n');
    table(&mut s, rows, [(3, "e_λ"), (4, "e_1λ"), (5, "e_1u_H2")]);
    s
}

pub fn stability_markdown(runs: &[StabilityRun]) -> String {
    let mut s = String::from("| Δt = h | Z⁰ | Zᴺ | max Zⁿ | Ξ | max Zⁿ/(Z⁰+Ξ) | max identity residual |\n|---|---|---|---|---|---|---|\n");
    for r in runs {
        let _ = writeln!(
            s,
            "| {} | {:.3e} | {:.3e} | {:.3e} | {:.3e} | {:.3} | {:.2e} |",
            dt_label(r.level),
            r.z0,
            r.z_final,
            r.z_max,
            r.xi,
            r.ratio,
            r.max_identity_residual
        );
    }
    s
}

/// Per-step functionals of every level as CSV.
pub fn write_functional_log(path: &Path, levels: &[(u32, &[crate::metrics::StepFunctionals])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["level", "step", "z", "s", "forcing", "identity_residual"]).map_err(csv_err)?;
    for (level, fs) in levels {
        for f in *fs {
            w.write_record([level.to_string(), f.step.to_string(), sci(Some(f.z)), sci(Some(f.s)), sci(Some(f.forcing)), sci(Some(f.identity_residual))])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Builds the table rows, writes the configured CSV and returns the markdown.
pub fn convergence_csv_and_markdown(runs: &[LevelRun], config: &super::config::RunConfig) -> Result<String> {
    let rows = super::sweep::convergence_rows(runs);
    if let Some(path) = &config.outputs.csv {
        emit_csv(&rows, path)?;
    }
    Ok(emit_markdown(&rows))
}
