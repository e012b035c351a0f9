//! Per-step trace CSV.
//!
//! One row per control cycle. `t`, the state columns and `h_up`/`h_lo` refer
//! to the state reached at the end of the cycle; the input, gains, slack,
//! `Z` and solver status are those of the cycle itself. Floats are written
//! in shortest round-trip form, so equal episodes give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use super::StepRecord;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str =
    "step,t,x,y,theta,v,xi_hat,nu,a,omega,nudot,h_up,h_lo,alpha_up,alpha_lo,delta,Z,status";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub xi_hat: f64,
    pub nu: f64,
    pub a: f64,
    pub omega: f64,
    pub nudot: f64,
    pub h_up: f64,
    pub h_lo: f64,
    pub alpha_up: f64,
    pub alpha_lo: f64,
    pub delta: f64,
    pub z: u8,
    pub status: String,
}

impl From<&StepRecord> for TraceRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            step: r.step,
            t: r.t,
            x: r.state.x,
            y: r.state.y,
            theta: r.state.theta,
            v: r.state.v,
            xi_hat: r.state.xi_hat,
            nu: r.state.nu,
            a: r.input.a,
            omega: r.input.omega,
            nudot: r.input.nudot,
            h_up: r.h_upper,
            h_lo: r.h_lower,
            alpha_up: r.alpha_upper,
            alpha_lo: r.alpha_lower,
            delta: r.delta,
            z: r.z,
            status: r.status.as_str().to_string(),
        }
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(160 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.t,
            r.x,
            r.y,
            r.theta,
            r.v,
            r.xi_hat,
            r.nu,
            r.a,
            r.omega,
            r.nudot,
            r.h_up,
            r.h_lo,
            r.alpha_up,
            r.alpha_lo,
            r.delta,
            r.z,
            r.status
        );
    }
    out
}

pub fn write_trace(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, trace_csv(rows))?;
    Ok(())
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header {TRACE_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 18 {
            return Err(bad(format!("expected 18 fields, found {}", f.len())));
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse::<f64>()
                .map_err(|_| bad(format!("field {k} is not a number: {:?}", f[k])))
        };
        rows.push(TraceRow {
            step: f[0].parse().map_err(|_| bad(format!("bad step {:?}", f[0])))?,
            t: num(1)?,
            x: num(2)?,
            y: num(3)?,
            theta: num(4)?,
            v: num(5)?,
            xi_hat: num(6)?,
            nu: num(7)?,
            a: num(8)?,
            omega: num(9)?,
            nudot: num(10)?,
            h_up: num(11)?,
            h_lo: num(12)?,
            alpha_up: num(13)?,
            alpha_lo: num(14)?,
            delta: num(15)?,
            z: match f[16] {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("Z must be 0 or 1, got {other:?}"))),
            },
            status: f[17].to_string(),
        });
    }
    Ok(rows)
}
