//! Simulation output: structured events, metric samples and their file
//! encodings (NDJSON event log, CSV metrics, JSON summary).

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::PlatoonState;
use crate::scenario::CoverageCaps;
use crate::spectrum::{PlatoonId, SubChannelId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    SplitPrepared,
    SplitAborted,
    SplitExecuted,
    SeparationStarted,
    SeparationCompleted,
    MergeExecuted,
    MergeRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub time_s: f64,
    pub event_type: EventType,
    pub platoon_ids: Vec<PlatoonId>,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub time_s: f64,
    pub capacity_vps: f64,
    pub n_platoons: u64,
    pub n_in_coverage: u64,
    pub active_maneuvers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonSummary {
    pub id: PlatoonId,
    pub size: u64,
    pub leader_vehicle_id: u32,
    pub members: Vec<u32>,
    pub subchannel_id: Option<SubChannelId>,
    pub fsm_state: PlatoonState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ticks: u64,
    pub caps: CoverageCaps,
    pub achieved_capacity_vps: Vec<MetricsSample>,
    pub qos_violations: BTreeMap<String, u64>,
    pub splits: u64,
    pub merges: u64,
    /// Platoon-seconds spent in separation maneuvers.
    pub maneuver_time_s: f64,
    /// Longest time from split preparation to split execution.
    pub max_split_grace_s: f64,
    /// Final platoons, front to rear.
    pub final_platoons: Vec<PlatoonSummary>,
    pub event_log: Vec<Event>,
}

/// Compact run summary written next to the event log and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ticks: u64,
    pub caps: CoverageCaps,
    pub splits: u64,
    pub merges: u64,
    pub maneuver_time_s: f64,
    pub max_split_grace_s: f64,
    pub qos_violations: BTreeMap<String, u64>,
    pub mean_capacity_vps: f64,
    pub final_capacity_vps: f64,
    pub final_platoon_sizes: Vec<u64>,
    pub events: u64,
}

impl MetricsReport {
    pub fn summary(&self) -> Summary {
        let caps = &self.achieved_capacity_vps;
        let mean = if caps.is_empty() {
            0.0
        } else {
            caps.iter().map(|s| s.capacity_vps).sum::<f64>() / caps.len() as f64
        };
        Summary {
            ticks: self.ticks,
            caps: self.caps,
            splits: self.splits,
            merges: self.merges,
            maneuver_time_s: self.maneuver_time_s,
            max_split_grace_s: self.max_split_grace_s,
            qos_violations: self.qos_violations.clone(),
            mean_capacity_vps: mean,
            final_capacity_vps: caps.last().map_or(0.0, |s| s.capacity_vps),
            final_platoon_sizes: self.final_platoons.iter().map(|p| p.size).collect(),
            events: self.event_log.len() as u64,
        }
    }

    pub fn total_violations(&self) -> u64 {
        self.qos_violations.values().sum()
    }

    pub fn events_of(&self, kind: EventType) -> impl Iterator<Item = &Event> {
        self.event_log.iter().filter(move |e| e.event_type == kind)
    }
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    const DIGITS: usize = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_event_log<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(samples: &[MetricsSample], mut out: W) -> io::Result<()> {
    writeln!(out, "# x: time_s [s]; y: capacity_vps [vehicles/s]")?;
    writeln!(
        out,
        "time_s,capacity_vps,n_platoons,n_in_coverage,active_maneuvers"
    )?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            format_sig(s.time_s),
            format_sig(s.capacity_vps),
            s.n_platoons,
            s.n_in_coverage,
            s.active_maneuvers
        )?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(report: &MetricsReport, mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, &report.summary())?;
    out.write_all(b"\n")
}
