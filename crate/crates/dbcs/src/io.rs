//! Stream file formats and result sinks: JSONL records in, CSV band rows and
//! JSON snapshots out.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::engine::EngineSpec;
use crate::error::{DbcsError, Result};
use crate::evalsuite::sig9;
use crate::stream::{ConfidenceBand, Observation, SnapshotRecord};

/// Wire form of one stream record:
/// `{"unit": u64, "t": u64, "w": 0|1, "y": number, "p1": number, "yhat": optional}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRecord {
    pub unit: u64,
    pub t: u64,
    pub w: u8,
    pub y: f64,
    pub p1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yhat: Option<f64>,
}

impl From<WireRecord> for Observation {
    fn from(r: WireRecord) -> Observation {
        Observation {
            unit_id: r.unit,
            time: r.t,
            arm: r.w,
            outcome: r.y,
            p1: r.p1,
            prediction: r.yhat,
        }
    }
}

impl From<Observation> for WireRecord {
    fn from(o: Observation) -> WireRecord {
        WireRecord {
            unit: o.unit_id,
            t: o.time,
            w: o.arm,
            y: o.outcome,
            p1: o.p1,
            yhat: o.prediction,
        }
    }
}

/// Parse one JSONL line. `line_no` is 1-based and reported in errors. In
/// non-strict mode unknown keys are tolerated (the caller may warn).
pub fn parse_line(line: &str, line_no: usize, strict: bool) -> Result<Observation> {
    let parse = |l: &str| -> std::result::Result<WireRecord, serde_json::Error> {
        if strict {
            serde_json::from_str::<WireRecord>(l)
        } else {
            #[derive(Deserialize)]
            struct Lenient {
                unit: u64,
                t: u64,
                w: u8,
                y: f64,
                p1: f64,
                #[serde(default)]
                yhat: Option<f64>,
            }
            serde_json::from_str::<Lenient>(l).map(|r| WireRecord {
                unit: r.unit,
                t: r.t,
                w: r.w,
                y: r.y,
                p1: r.p1,
                yhat: r.yhat,
            })
        }
    };
    let rec = parse(line).map_err(|e| DbcsError::Parse {
        line: line_no,
        detail: e.to_string(),
    })?;
    let obs: Observation = rec.into();
    obs.validate().map_err(|e| match e {
        // keep positivity errors recognizable but add the line context
        DbcsError::Positivity { p1 } => DbcsError::Parse {
            line: line_no,
            detail: format!("positivity violated: p1 = {p1} must lie strictly inside (0,1)"),
        },
        other => DbcsError::Parse {
            line: line_no,
            detail: other.to_string(),
        },
    })?;
    Ok(obs)
}

/// Read a whole stream, grouping consecutive records with equal `t` into
/// steps. Records must arrive ordered by `t`; unit order within a step is
/// free.
pub fn read_steps<R: BufRead>(reader: R, strict: bool) -> Result<Vec<Vec<Observation>>> {
    let mut steps: Vec<Vec<Observation>> = Vec::new();
    let mut current: Vec<Observation> = Vec::new();
    let mut current_t = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DbcsError::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let obs = parse_line(&line, i + 1, strict)?;
        if obs.time < current_t {
            return Err(DbcsError::Parse {
                line: i + 1,
                detail: format!("records out of order: t = {} after t = {}", obs.time, current_t),
            });
        }
        if obs.time != current_t {
            if !current.is_empty() {
                steps.push(std::mem::take(&mut current));
            }
            current_t = obs.time;
        }
        current.push(obs);
    }
    if !current.is_empty() {
        steps.push(current);
    }
    Ok(steps)
}

pub fn write_records<W: Write>(w: &mut W, steps: &[Vec<Observation>]) -> Result<()> {
    for step in steps {
        for obs in step {
            let rec: WireRecord = (*obs).into();
            serde_json::to_writer(&mut *w, &rec).map_err(io_err)?;
            writeln!(w).map_err(|e| io_err(serde_json::Error::io(e)))?;
        }
    }
    Ok(())
}

fn io_err(e: serde_json::Error) -> DbcsError {
    DbcsError::Parse {
        line: 0,
        detail: e.to_string(),
    }
}

/// Checkpoint file: the engine spec that produced the state plus the state
/// itself, so resuming under different flags is refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub spec: EngineSpec,
    pub state: SnapshotRecord,
}

pub fn write_snapshot(path: &std::path::Path, snap: &SnapshotFile) -> Result<()> {
    let json = serde_json::to_string_pretty(snap).map_err(io_err)?;
    std::fs::write(path, json).map_err(|e| DbcsError::InvalidSnapshot(e.to_string()))
}

pub fn read_snapshot(path: &std::path::Path) -> Result<SnapshotFile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| DbcsError::InvalidSnapshot(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| DbcsError::InvalidSnapshot(e.to_string()))
}

pub fn band_header<W: Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "step,center,lower,upper,half_width")
}

pub fn band_row<W: Write>(w: &mut W, band: &ConfidenceBand) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{}",
        band.step,
        sig9(band.center),
        sig9(band.lower),
        sig9(band.upper),
        sig9(band.half_width)
    )
}

/// Truth-path CSV: one row per step.
pub fn write_truth_csv<W: Write>(w: &mut W, truth: &[f64]) -> std::io::Result<()> {
    writeln!(w, "t,truth")?;
    for (i, v) in truth.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, sig9(*v))?;
    }
    Ok(())
}
