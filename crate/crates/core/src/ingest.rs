//! Session-log parsing and occupancy aggregation.
//!
//! A session log is comma-delimited text, one association event per line:
//! `start_epoch_seconds,duration_seconds,device_id,ap_id`. An optional
//! header line `start,duration,device,ap` is skipped. Aggregation buckets
//! sessions into fixed intervals and counts distinct devices per interval.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Interval width of a series: 15, 30, or 60 minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scale {
    M15,
    M30,
    M60,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::M15, Scale::M30, Scale::M60];

    pub fn from_minutes(minutes: u32) -> Result<Scale> {
        match minutes {
            15 => Ok(Scale::M15),
            30 => Ok(Scale::M30),
            60 => Ok(Scale::M60),
            other => Err(Error::invalid(format!(
                "scale must be one of 15, 30, 60 minutes, got {other}"
            ))),
        }
    }

    pub fn minutes(self) -> u32 {
        match self {
            Scale::M15 => 15,
            Scale::M30 => 30,
            Scale::M60 => 60,
        }
    }

    pub fn seconds(self) -> i64 {
        self.minutes() as i64 * 60
    }
}

/// Aggregation target of a series: the whole building or a single AP.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scope {
    Building,
    AccessPoint(String),
}

impl Scope {
    pub fn access_point(ap_id: impl Into<String>) -> Result<Scope> {
        let ap_id = ap_id.into();
        if ap_id.is_empty() {
            return Err(Error::invalid("access point scope requires a non-empty AP id"));
        }
        Ok(Scope::AccessPoint(ap_id))
    }

    fn matches(&self, ap_id: &str) -> bool {
        match self {
            Scope::Building => true,
            Scope::AccessPoint(id) => id == ap_id,
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Building => write!(f, "building"),
            Scope::AccessPoint(id) => write!(f, "ap:{id}"),
        }
    }
}

/// One Wi-Fi association event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    /// Session start, UTC epoch seconds.
    pub start: i64,
    /// Session duration in seconds. Zero-duration sessions overlap nothing.
    pub duration: u64,
    /// Opaque device identifier (hashed MAC).
    pub device_id: String,
    /// Access point the device associated with.
    pub ap_id: String,
}

impl SessionRecord {
    /// Session end, exclusive.
    pub fn end(&self) -> i64 {
        self.start.saturating_add(self.duration as i64)
    }
}

/// Occupant counts over consecutive intervals at one scale and scope.
///
/// Index `k` covers `[start + k*scale, start + (k+1)*scale)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySeries {
    pub scale: Scale,
    pub scope: Scope,
    /// First interval start, aligned to the scale boundary.
    pub start: i64,
    pub counts: Vec<u32>,
}

impl OccupancySeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Timestamp of interval `k`.
    pub fn interval_start(&self, k: usize) -> i64 {
        self.start + k as i64 * self.scale.seconds()
    }

    /// End of the covered range, exclusive.
    pub fn end(&self) -> i64 {
        self.interval_start(self.counts.len())
    }

    /// Real-valued view for preprocessing and I/O.
    pub fn to_timed(&self) -> TimedSeries {
        TimedSeries {
            start: self.start,
            step_seconds: self.scale.seconds(),
            values: self.counts.iter().map(|&c| c as f64).collect(),
        }
    }
}

/// A real-valued series on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedSeries {
    pub start: i64,
    pub step_seconds: i64,
    pub values: Vec<f64>,
}

impl TimedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn interval_start(&self, k: usize) -> i64 {
        self.start + k as i64 * self.step_seconds
    }
}

const HEADER: &str = "start,duration,device,ap";

/// Parse a session log. One record per well-formed line, in file order.
pub fn parse_sessions<R: BufRead>(reader: R) -> Result<Vec<SessionRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 && line.trim() == HEADER {
            continue;
        }
        records.push(parse_line(line, line_no)?);
    }
    Ok(records)
}

fn parse_line(line: &str, line_no: usize) -> Result<SessionRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("expected 4 comma-delimited fields, found {}", fields.len()),
        });
    }
    let start: i64 = fields[0].trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        reason: format!("invalid start timestamp {:?}", fields[0]),
    })?;
    let duration: i64 = fields[1].trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        reason: format!("invalid duration {:?}", fields[1]),
    })?;
    if duration < 0 {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("negative duration {duration}"),
        });
    }
    let device_id = fields[2].trim();
    let ap_id = fields[3].trim();
    if device_id.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            reason: "empty device id".to_string(),
        });
    }
    if ap_id.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            reason: "empty AP id".to_string(),
        });
    }
    Ok(SessionRecord {
        start,
        duration: duration as u64,
        device_id: device_id.to_string(),
        ap_id: ap_id.to_string(),
    })
}

/// Count distinct devices per interval over `[t0, t1)`.
///
/// A device is counted in interval `k` when at least one of its sessions
/// (restricted to the scope's AP for [`Scope::AccessPoint`]) has a
/// nonzero-length overlap with the interval. Intervals with no sessions
/// yield 0.
pub fn count_occupancy(
    sessions: &[SessionRecord],
    scale: Scale,
    scope: &Scope,
    t0: i64,
    t1: i64,
) -> Result<OccupancySeries> {
    let width = scale.seconds();
    if t0 % width != 0 || t1 % width != 0 {
        return Err(Error::invalid(format!(
            "range [{t0}, {t1}) is not aligned to {}-minute boundaries",
            scale.minutes()
        )));
    }
    if t0 >= t1 {
        return Err(Error::invalid(format!("empty range [{t0}, {t1})")));
    }
    let n = ((t1 - t0) / width) as usize;
    let mut devices: Vec<HashSet<&str>> = vec![HashSet::new(); n];
    for session in sessions {
        if !scope.matches(&session.ap_id) {
            continue;
        }
        let s = session.start;
        let e = session.end();
        if e <= s || e <= t0 || s >= t1 {
            continue;
        }
        let k_lo = ((s - t0).div_euclid(width)).max(0) as usize;
        let k_hi = ((e - 1 - t0).div_euclid(width)).min(n as i64 - 1) as usize;
        for set in &mut devices[k_lo..=k_hi] {
            set.insert(session.device_id.as_str());
        }
    }
    Ok(OccupancySeries {
        scale,
        scope: scope.clone(),
        start: t0,
        counts: devices.iter().map(|set| set.len() as u32).collect(),
    })
}

/// Distinct AP ids present in a log, sorted.
pub fn ap_ids(sessions: &[SessionRecord]) -> Vec<String> {
    let mut ids: Vec<String> = sessions
        .iter()
        .map(|s| s.ap_id.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    ids.sort();
    ids
}

/// Smallest scale-aligned range covering every session in the log.
pub fn infer_range(sessions: &[SessionRecord], scale: Scale) -> Result<(i64, i64)> {
    let width = scale.seconds();
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for s in sessions {
        if s.duration == 0 {
            continue;
        }
        lo = lo.min(s.start);
        hi = hi.max(s.end());
    }
    if lo > hi {
        return Err(Error::invalid(
            "cannot infer a time range from an empty log; pass an explicit range",
        ));
    }
    let t0 = lo.div_euclid(width) * width;
    let t1 = (hi - 1).div_euclid(width) * width + width;
    Ok((t0, t1))
}

/// Write a counts series: `interval_start_epoch,count` per line, in time order.
pub fn write_series<W: Write>(series: &OccupancySeries, mut writer: W) -> Result<()> {
    for (k, count) in series.counts.iter().enumerate() {
        writeln!(writer, "{},{}", series.interval_start(k), count)?;
    }
    Ok(())
}

/// Write a session log in the format [`parse_sessions`] reads, with header.
pub fn write_sessions<W: Write>(sessions: &[SessionRecord], mut writer: W) -> Result<()> {
    writeln!(writer, "{HEADER}")?;
    for s in sessions {
        writeln!(writer, "{},{},{},{}", s.start, s.duration, s.device_id, s.ap_id)?;
    }
    Ok(())
}

/// Write a real-valued series in the same 2-column format.
pub fn write_timed_series<W: Write>(series: &TimedSeries, mut writer: W) -> Result<()> {
    for (k, value) in series.values.iter().enumerate() {
        writeln!(writer, "{},{}", series.interval_start(k), value)?;
    }
    Ok(())
}

/// Read a 2-column series file back. The step is inferred from consecutive
/// timestamps and must be uniform.
pub fn read_series<R: BufRead>(reader: R) -> Result<TimedSeries> {
    let mut stamps: Vec<i64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (stamp, value) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            reason: "expected `interval_start_epoch,count`".to_string(),
        })?;
        stamps.push(stamp.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid timestamp {stamp:?}"),
        })?);
        values.push(value.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid count {value:?}"),
        })?);
    }
    if stamps.is_empty() {
        return Err(Error::invalid("series file is empty"));
    }
    let step = if stamps.len() >= 2 {
        stamps[1] - stamps[0]
    } else {
        0
    };
    if stamps.len() >= 2 && step <= 0 {
        return Err(Error::invalid("series timestamps must be strictly increasing"));
    }
    for (k, window) in stamps.windows(2).enumerate() {
        if window[1] - window[0] != step {
            return Err(Error::Parse {
                line: k + 2,
                reason: format!(
                    "non-uniform spacing: expected step {step}, found {}",
                    window[1] - window[0]
                ),
            });
        }
    }
    Ok(TimedSeries {
        start: stamps[0],
        step_seconds: step,
        values,
    })
}
