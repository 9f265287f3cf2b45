//! Result serialization: sweep CSVs, per-trial logs, run metadata, and the
//! plotting helper.
//!
//! The sweep CSV schema is fixed (see [`CSV_HEADER`]); floats use Rust's
//! default shortest-round-trip formatting, so parsing a written file
//! reproduces the original values bit for bit. [`emit_outputs`] writes one
//! CSV per result table plus `run_metadata.txt` (resolved configuration,
//! seed, and per-point amplification) and `plot.py`, making the output
//! directory self-contained.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::harness::config::ScenarioConfig;
use crate::harness::sweep::{NamedSweep, PointResult, SweepAxis, TrialLogRow};

/// Column schema of every sweep CSV.
pub const CSV_HEADER: &str = "sweep_value,rmse_theta_ub_el,rmse_theta_ub_az,crb_theta_ub_el,crb_theta_ub_az,rmse_theta_ur_el,rmse_theta_ur_az,crb_theta_ur_el,crb_theta_ur_az,rmse_pu,peb,trials,failures";

/// Column schema of the optional per-trial log CSV.
pub const TRIAL_LOG_HEADER: &str = "point_idx,sweep_value,trial_idx,status,err_theta_ub_el,err_theta_ub_az,err_theta_ur_el,err_theta_ur_az,err_pu";

/// Renders one result table in the fixed CSV schema.
pub fn render_sweep_csv(points: &[PointResult]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.sweep_value,
            p.rmse_theta_ub_el,
            p.rmse_theta_ub_az,
            p.crb_theta_ub_el,
            p.crb_theta_ub_az,
            p.rmse_theta_ur_el,
            p.rmse_theta_ur_az,
            p.crb_theta_ur_el,
            p.crb_theta_ur_az,
            p.rmse_pu,
            p.peb,
            p.trials,
            p.failures,
        );
    }
    out
}

/// Renders the per-trial log. The status column never contains commas
/// (failure messages are sanitized), keeping the file trivially parseable.
pub fn render_trial_log(rows: &[TrialLogRow]) -> String {
    let mut out = String::from(TRIAL_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.point_idx,
            r.sweep_value,
            r.trial_idx,
            r.status.replace(',', ";"),
            r.err_theta_ub_el,
            r.err_theta_ub_az,
            r.err_theta_ur_el,
            r.err_theta_ur_az,
            r.err_pu,
        );
    }
    out
}

/// CSV parse failure with its line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("csv line {line}: {message}")]
pub struct CsvError {
    /// 1-based line number.
    pub line: usize,
    /// What went wrong.
    pub message: String,
}

fn csv_err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError {
        line,
        message: message.into(),
    }
}

/// Parses a sweep CSV back into point results. Fields that are not part of
/// the schema (`amplification`, `sigma_eff2`) come back as NaN.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<PointResult>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((_, h)) => return Err(csv_err(1, format!("unexpected header {h:?}"))),
        None => return Err(csv_err(1, "empty file")),
    }
    let mut points = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 13 {
            return Err(csv_err(line, format!("expected 13 fields, got {}", fields.len())));
        }
        let f = |i: usize| -> Result<f64, CsvError> {
            fields[i]
                .parse()
                .map_err(|_| csv_err(line, format!("bad float {:?}", fields[i])))
        };
        let u = |i: usize| -> Result<usize, CsvError> {
            fields[i]
                .parse()
                .map_err(|_| csv_err(line, format!("bad integer {:?}", fields[i])))
        };
        points.push(PointResult {
            sweep_value: f(0)?,
            rmse_theta_ub_el: f(1)?,
            rmse_theta_ub_az: f(2)?,
            crb_theta_ub_el: f(3)?,
            crb_theta_ub_az: f(4)?,
            rmse_theta_ur_el: f(5)?,
            rmse_theta_ur_az: f(6)?,
            crb_theta_ur_el: f(7)?,
            crb_theta_ur_az: f(8)?,
            rmse_pu: f(9)?,
            peb: f(10)?,
            trials: u(11)?,
            failures: u(12)?,
            amplification: f64::NAN,
            sigma_eff2: f64::NAN,
        });
    }
    Ok(points)
}

/// Renders `run_metadata.txt`: tool version, seed, sweep axis, per-point
/// amplification, and the fully resolved configuration.
pub fn render_metadata(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    seed: u64,
    sweeps: &[NamedSweep],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tool = fasloc {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "sweep = {}", axis.label());
    for sweep in sweeps {
        let _ = writeln!(out);
        let _ = writeln!(out, "[table {}]", sweep.name);
        let _ = writeln!(out, "sweep_value = {}", sweep.value_key);
        let _ = writeln!(out, "points = {}", sweep.points.len());
        for (i, p) in sweep.points.iter().enumerate() {
            let _ = writeln!(
                out,
                "point {i}: sweep_value = {}, amplification = {}, sigma_eff2 = {}, failures = {}/{}",
                p.sweep_value, p.amplification, p.sigma_eff2, p.failures, p.trials,
            );
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "[config]");
    out.push_str(&cfg.render());
    out
}

/// Writes every artifact of a finished run into `dir` (created if missing):
/// `<table>.csv` per result table, `trials_<table>.csv` when trial logging
/// was on, `run_metadata.txt`, and `plot.py`. Returns the written paths.
pub fn emit_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    seed: u64,
    sweeps: &[NamedSweep],
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: String, contents: &str| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    for sweep in sweeps {
        emit(format!("{}.csv", sweep.name), &render_sweep_csv(&sweep.points))?;
        if !sweep.trial_log.is_empty() {
            emit(
                format!("trials_{}.csv", sweep.name),
                &render_trial_log(&sweep.trial_log),
            )?;
        }
    }
    emit(
        "run_metadata.txt".into(),
        &render_metadata(cfg, axis, seed, sweeps),
    )?;
    emit("plot.py".into(), include_str!("plot.py"))?;
    Ok(written)
}
