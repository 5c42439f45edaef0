//! CSV output of run logs.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::solver::RunRecord;

pub const RUN_LOG_COLUMNS: [&str; 7] = [
    "epoch",
    "iteration",
    "F_gap",
    "feasibility_norm",
    "dist_estimate",
    "alpha_k",
    "wall_time_ms",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_run_log<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_LOG_COLUMNS)?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.iteration.to_string(),
            format_float(r.f_gap),
            format_float(r.feasibility_norm),
            format_float(r.dist_estimate),
            format_float(r.alpha_k),
            format_float(r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_run_log<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(RUN_LOG_COLUMNS) {
        return Err(Error::Config("unexpected run log header".into()));
    }
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
