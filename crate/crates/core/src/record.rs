//! Shared record vocabulary: timestamps, intervals and record kinds.

use std::fmt;
use std::ops::Sub;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{ColocationEvent, MovementInterval};
use crate::hrv::{HrvWindow, NormalizedHrSeries};
use crate::ingest::{GpsFix, RrSample};

/// Epoch milliseconds. Serialized as a bare JSON integer; fractional values
/// are rejected on input so that round trips stay bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const MIN: Timestamp = Timestamp(i64::MIN);
    pub const MAX: Timestamp = Timestamp(i64::MAX);

    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub const fn add_ms(self, ms: i64) -> Self {
        Timestamp(self.0 + ms)
    }

    /// Seconds elapsed since `origin`, as a float.
    pub fn secs_since(self, origin: Timestamp) -> f64 {
        (self.0 - origin.0) as f64 / 1000.0
    }
}

impl Sub for Timestamp {
    type Output = i64;

    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeInterval {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        TimeInterval { start, end }
    }

    pub fn everything() -> Self {
        TimeInterval { start: Timestamp::MIN, end: Timestamp::MAX }
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts < self.end
    }

    pub fn duration_ms(&self) -> i64 {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn is_valid(&self) -> bool {
        self.start <= self.end
    }
}

/// Every record type that can travel on the bus or sit in the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Rr,
    Gps,
    Hrv,
    SyncBatch,
    Colocation,
    Activity,
    HrNormalized,
    Movement,
}

impl RecordKind {
    pub const ALL: [RecordKind; 8] = [
        RecordKind::Rr,
        RecordKind::Gps,
        RecordKind::Hrv,
        RecordKind::SyncBatch,
        RecordKind::Colocation,
        RecordKind::Activity,
        RecordKind::HrNormalized,
        RecordKind::Movement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Rr => "rr",
            RecordKind::Gps => "gps",
            RecordKind::Hrv => "hrv",
            RecordKind::SyncBatch => "sync",
            RecordKind::Colocation => "colocation",
            RecordKind::Activity => "activity",
            RecordKind::HrNormalized => "hrnorm",
            RecordKind::Movement => "movement",
        }
    }

    /// Kinds that a phone uploads in a sync batch and the central store keeps.
    pub fn is_device_record(self) -> bool {
        matches!(self, RecordKind::Rr | RecordKind::Gps | RecordKind::Hrv)
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown record kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for RecordKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecordKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// A record produced on a phone: what sync batches carry and the store keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Rr(RrSample),
    Gps(GpsFix),
    Hrv(HrvWindow),
}

impl Record {
    pub fn kind(&self) -> RecordKind {
        match self {
            Record::Rr(_) => RecordKind::Rr,
            Record::Gps(_) => RecordKind::Gps,
            Record::Hrv(_) => RecordKind::Hrv,
        }
    }

    pub fn device_id(&self) -> &str {
        match self {
            Record::Rr(r) => &r.device_id,
            Record::Gps(g) => &g.device_id,
            Record::Hrv(h) => &h.device_id,
        }
    }

    /// Reception time for RR, fix time for GPS, window end for HRV.
    pub fn timestamp(&self) -> Timestamp {
        match self {
            Record::Rr(r) => r.reception_ts,
            Record::Gps(g) => g.ts,
            Record::Hrv(h) => h.window_end,
        }
    }

    /// Per-kind ordinal used as the store key: seq for RR, fix time for GPS,
    /// window start for HRV.
    pub fn ordinal(&self) -> i64 {
        match self {
            Record::Rr(r) => r.seq as i64,
            Record::Gps(g) => g.ts.millis(),
            Record::Hrv(h) => h.window_start.millis(),
        }
    }

    /// One line of the canonical JSONL encoding, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        match self {
            Record::Rr(r) => serde_json::to_string(r),
            Record::Gps(g) => serde_json::to_string(g),
            Record::Hrv(h) => serde_json::to_string(h),
        }
        .expect("record types serialize infallibly")
    }

    /// Decode one JSONL line of a known kind.
    pub fn from_json_line(kind: RecordKind, line: &str) -> Result<Record, RecordParseError> {
        let rec = match kind {
            RecordKind::Rr => Record::Rr(serde_json::from_str(line)?),
            RecordKind::Gps => Record::Gps(serde_json::from_str(line)?),
            RecordKind::Hrv => Record::Hrv(serde_json::from_str(line)?),
            other => return Err(RecordParseError::NotADeviceRecord(other)),
        };
        Ok(rec)
    }

    /// Domain-level validity check (ranges, finiteness).
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Record::Rr(r) => r.validate(),
            Record::Gps(g) => g.validate(),
            Record::Hrv(h) => h.validate(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordParseError {
    #[error("invalid JSON record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0} records are not device records")]
    NotADeviceRecord(RecordKind),
}

/// The payload any bus topic can carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Rr(RrSample),
    Gps(GpsFix),
    Hrv(HrvWindow),
    SyncBatch(crate::ingest::SyncBatch),
    Colocation(ColocationEvent),
    Activity(crate::activity::ActivitySegment),
    HrNormalized(NormalizedHrSeries),
    Movement(MovementInterval),
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::Rr(_) => RecordKind::Rr,
            Payload::Gps(_) => RecordKind::Gps,
            Payload::Hrv(_) => RecordKind::Hrv,
            Payload::SyncBatch(_) => RecordKind::SyncBatch,
            Payload::Colocation(_) => RecordKind::Colocation,
            Payload::Activity(_) => RecordKind::Activity,
            Payload::HrNormalized(_) => RecordKind::HrNormalized,
            Payload::Movement(_) => RecordKind::Movement,
        }
    }
}

impl From<Record> for Payload {
    fn from(r: Record) -> Self {
        match r {
            Record::Rr(x) => Payload::Rr(x),
            Record::Gps(x) => Payload::Gps(x),
            Record::Hrv(x) => Payload::Hrv(x),
        }
    }
}
