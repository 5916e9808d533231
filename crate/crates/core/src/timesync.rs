//! Mapping phone clocks onto one common reference.
//!
//! Phones discipline their clocks against a time server, which leaves up to a
//! couple of seconds between any two of them. That is small next to how fast
//! heart rate or position change, so the only model is a constant offset per
//! device, bounded by `skew_bound_ms`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::Timestamp;

pub const DEFAULT_SKEW_BOUND_MS: i64 = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum ClockError {
    #[error("exchange timestamps are not monotonic (t0 <= t3 and t1 <= t2 required)")]
    NonMonotonic,
    #[error("clock model for {device_id:?} has offset {offset_ms} ms beyond bound {skew_bound_ms} ms")]
    InvalidModel {
        device_id: String,
        offset_ms: i64,
        skew_bound_ms: i64,
    },
    #[error("no clock models given")]
    EmptyList,
    #[error("clock config: {0}")]
    Config(String),
}

/// Offset of a device clock relative to the common clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockModel {
    pub device_id: String,
    /// Device clock minus common clock.
    pub offset_ms: i64,
    #[serde(default = "default_bound")]
    pub skew_bound_ms: i64,
}

fn default_bound() -> i64 {
    DEFAULT_SKEW_BOUND_MS
}

impl ClockModel {
    pub fn new(device_id: &str, offset_ms: i64) -> Self {
        ClockModel { device_id: device_id.to_string(), offset_ms, skew_bound_ms: DEFAULT_SKEW_BOUND_MS }
    }

    pub fn with_bound(mut self, skew_bound_ms: i64) -> Self {
        self.skew_bound_ms = skew_bound_ms;
        self
    }

    pub fn is_valid(&self) -> bool {
        self.offset_ms.abs() <= self.skew_bound_ms
    }

    /// Build a model from a two-way exchange initiated by the device:
    /// `t0`/`t3` on the device clock, `t1`/`t2` on the server (common) clock.
    pub fn from_exchange(device_id: &str, exchange: [Timestamp; 4]) -> Result<Self, ClockError> {
        let [t0, t1, t2, t3] = exchange;
        // estimate is server minus device
        let server_ahead = estimate_offset(t0, t1, t2, t3)?;
        Ok(ClockModel::new(device_id, -(server_ahead.round() as i64)))
    }

    fn check(&self) -> Result<(), ClockError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(ClockError::InvalidModel {
                device_id: self.device_id.clone(),
                offset_ms: self.offset_ms,
                skew_bound_ms: self.skew_bound_ms,
            })
        }
    }
}

/// Two-way exchange offset estimate, remote clock minus local clock.
///
/// `t0` local send, `t1` remote receive, `t2` remote send, `t3` local receive.
/// Exact when both one-way delays are equal; otherwise off by half their
/// difference.
pub fn estimate_offset(t0: Timestamp, t1: Timestamp, t2: Timestamp, t3: Timestamp) -> Result<f64, ClockError> {
    if t0 > t3 || t1 > t2 {
        return Err(ClockError::NonMonotonic);
    }
    Ok(((t1 - t0) + (t2 - t3)) as f64 / 2.0)
}

pub fn to_common_clock(device_ts: Timestamp, model: &ClockModel) -> Result<Timestamp, ClockError> {
    model.check()?;
    Ok(device_ts.add_ms(-model.offset_ms))
}

pub fn from_common_clock(common_ts: Timestamp, model: &ClockModel) -> Result<Timestamp, ClockError> {
    model.check()?;
    Ok(common_ts.add_ms(model.offset_ms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    pub max_gap_ms: i64,
    /// Pair realizing the max gap, if there is more than one device.
    pub worst_pair: Option<(String, String)>,
    pub pass: bool,
}

/// Largest pairwise offset gap. A pair passes when its gap is within the sum
/// of both bounds, i.e. twice the bound when the bounds agree.
pub fn check_skew(models: &[ClockModel]) -> Result<SkewReport, ClockError> {
    if models.is_empty() {
        return Err(ClockError::EmptyList);
    }
    let mut report = SkewReport { max_gap_ms: 0, worst_pair: None, pass: true };
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            let gap = (a.offset_ms - b.offset_ms).abs();
            if gap > a.skew_bound_ms + b.skew_bound_ms {
                report.pass = false;
            }
            if report.worst_pair.is_none() || gap > report.max_gap_ms {
                report.max_gap_ms = gap;
                report.worst_pair = Some((a.device_id.clone(), b.device_id.clone()));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClockEntry {
    offset_ms: i64,
    #[serde(default = "default_bound")]
    skew_bound_ms: i64,
}

/// Parse a JSON object keyed by device id:
/// `{"subject1": {"offset_ms": 120, "skew_bound_ms": 2000}, ...}`.
pub fn parse_clock_config(json: &str) -> Result<BTreeMap<String, ClockModel>, ClockError> {
    let raw: BTreeMap<String, ClockEntry> =
        serde_json::from_str(json).map_err(|e| ClockError::Config(e.to_string()))?;
    Ok(raw
        .into_iter()
        .map(|(id, e)| {
            let model = ClockModel { device_id: id.clone(), offset_ms: e.offset_ms, skew_bound_ms: e.skew_bound_ms };
            (id, model)
        })
        .collect())
}

pub fn render_clock_config(models: &BTreeMap<String, ClockModel>) -> String {
    let raw: BTreeMap<&str, ClockEntry> = models
        .iter()
        .map(|(id, m)| (id.as_str(), ClockEntry { offset_ms: m.offset_ms, skew_bound_ms: m.skew_bound_ms }))
        .collect();
    serde_json::to_string_pretty(&raw).expect("clock config serializes") + "\n"
}

pub fn load_clock_config(path: &Path) -> Result<BTreeMap<String, ClockModel>, ClockError> {
    let text = std::fs::read_to_string(path).map_err(|e| ClockError::Config(e.to_string()))?;
    parse_clock_config(&text)
}
