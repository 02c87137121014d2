//! Per-round regret traces and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::arm::Arm;
use crate::design::SelectMode;
use crate::error::{Error, Result};

/// How a round's arm came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlayMode {
    /// Structure-learning probe sweep.
    Probe,
    /// Structure-learning observational top-up.
    TopUp,
    Explore,
    Exploit,
    Eliminate,
}

impl PlayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PlayMode::Probe => "probe",
            PlayMode::TopUp => "topup",
            PlayMode::Explore => "explore",
            PlayMode::Exploit => "exploit",
            PlayMode::Eliminate => "eliminate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "probe" => PlayMode::Probe,
            "topup" => PlayMode::TopUp,
            "explore" => PlayMode::Explore,
            "exploit" => PlayMode::Exploit,
            "eliminate" => PlayMode::Eliminate,
            _ => return None,
        })
    }
}

impl From<SelectMode> for PlayMode {
    fn from(mode: SelectMode) -> Self {
        match mode {
            SelectMode::Explore => PlayMode::Explore,
            SelectMode::Exploit => PlayMode::Exploit,
            SelectMode::Eliminate => PlayMode::Eliminate,
        }
    }
}

/// One played round.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub arm: Arm,
    pub reward: f64,
    pub inst_regret: Option<f64>,
    pub cum_regret: Option<f64>,
    pub stage: usize,
    pub mode: PlayMode,
    pub candidate_count: usize,
}

/// A full run: rounds contiguous from 1, the cumulative column running-summing
/// the instantaneous one. Regret columns are present only when the run had a
/// ground-truth mean oracle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTrace {
    pub rows: Vec<TraceRow>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_regret(&self) -> bool {
        self.rows.first().is_some_and(|r| r.inst_regret.is_some())
    }

    pub fn final_cum_regret(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.cum_regret)
    }

    /// Cumulative regret at a 1-based round (None if out of range or absent).
    pub fn cum_regret_at(&self, round: usize) -> Option<f64> {
        self.rows.get(round.checked_sub(1)?).and_then(|r| r.cum_regret)
    }
}

/// 12-significant-digit decimal rendering used by every CSV emitter.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

const FULL_HEADER: &str = "round,arm_bitmask,reward,inst_regret,cum_regret,stage,mode,candidate_count";
const SLIM_HEADER: &str = "round,arm_bitmask,reward,stage,mode,candidate_count";

/// Renders the trace as CSV text; regret columns appear only when available.
pub fn trace_to_csv(trace: &RegretTrace) -> String {
    let with_regret = trace.has_regret();
    let mut out = String::new();
    out.push_str(if with_regret { FULL_HEADER } else { SLIM_HEADER });
    out.push('\n');
    for row in &trace.rows {
        if with_regret {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                row.round,
                row.arm.bitmask(),
                format_value(row.reward),
                format_value(row.inst_regret.unwrap_or(f64::NAN)),
                format_value(row.cum_regret.unwrap_or(f64::NAN)),
                row.stage,
                row.mode.as_str(),
                row.candidate_count
            );
        } else {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.round,
                row.arm.bitmask(),
                format_value(row.reward),
                row.stage,
                row.mode.as_str(),
                row.candidate_count
            );
        }
    }
    out
}

pub fn write_trace_csv(trace: &RegretTrace, path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace)).map_err(|e| Error::io(path, e))
}

/// Parses a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<RegretTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty trace file"))?;
    let with_regret = match header {
        FULL_HEADER => true,
        SLIM_HEADER => false,
        other => return Err(Error::parse(path, 1, format!("unrecognized header: {other}"))),
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if with_regret { 8 } else { 6 };
        if fields.len() != expected {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {expected} fields, got {}", fields.len()),
            ));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad float: {s}")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad integer: {s}")))
        };
        let (stage_idx, mode_idx, count_idx) = if with_regret { (5, 6, 7) } else { (3, 4, 5) };
        let mask: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad bitmask: {}", fields[1])))?;
        rows.push(TraceRow {
            round: parse_u(fields[0])?,
            arm: Arm::from_bitmask(mask),
            reward: parse_f(fields[2])?,
            inst_regret: if with_regret { Some(parse_f(fields[3])?) } else { None },
            cum_regret: if with_regret { Some(parse_f(fields[4])?) } else { None },
            stage: parse_u(fields[stage_idx])?,
            mode: PlayMode::parse(fields[mode_idx])
                .ok_or_else(|| Error::parse(path, lineno, format!("bad mode: {}", fields[mode_idx])))?,
            candidate_count: parse_u(fields[count_idx])?,
        });
    }
    Ok(RegretTrace { rows })
}
