//! Phone-side ingest for one Body Area Network.
//!
//! The phone is the clock master: each R-R interval is stamped when the phone
//! receives it, not when the beat happened. [`reconstruct_beat_times`] rebuilds
//! beat times from the intervals themselves, and [`build_sync_batch`] packages
//! what a phone uploads once it reaches the central store.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Record, RecordKind, TimeInterval, Timestamp};

/// Physiologically plausible R-R range, in ms.
pub const RR_MIN_MS: u32 = 200;
pub const RR_MAX_MS: u32 = 3000;

/// Range of position accuracies considered in-distribution.
pub const GPS_ACCURACY_MIN_M: f64 = 4.0;
pub const GPS_ACCURACY_MAX_M: f64 = 1200.0;

/// Default reception/interval mismatch above which a run is split.
pub const DEFAULT_GAP_TOLERANCE_MS: i64 = 500;

/// Bluetooth 4.0 maximum theoretical application rate.
pub const BLE4_RATE_BITS_PER_S: f64 = 0.27e6;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("samples are not sorted by seq with strictly increasing reception time (at seq {0})")]
    UnsortedInput(u64),
    #[error("samples from more than one device ({0:?} and {1:?})")]
    MixedDevice(String, String),
    #[error("implausible sample at seq {seq}: {reason}")]
    InvalidSample { seq: u64, reason: String },
    #[error("input must be positive, got {0}")]
    NonPositiveInput(f64),
    #[error("no records for device {0:?}")]
    UnknownDevice(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

/// One R-R interval as received from a sensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrSample {
    pub device_id: String,
    pub seq: u64,
    pub rr_ms: u32,
    /// Phone clock at reception.
    pub reception_ts: Timestamp,
}

impl RrSample {
    pub fn validate(&self) -> Result<(), String> {
        if self.device_id.is_empty() {
            return Err("empty device_id".into());
        }
        if !(RR_MIN_MS..=RR_MAX_MS).contains(&self.rr_ms) {
            return Err(format!("rr_ms {} outside [{RR_MIN_MS}, {RR_MAX_MS}]", self.rr_ms));
        }
        Ok(())
    }
}

/// A beat with its reconstructed occurrence time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructedBeat {
    pub device_id: String,
    pub seq: u64,
    pub beat_ts: Timestamp,
    pub rr_ms: u32,
    /// Index of the contiguous run this beat belongs to.
    pub run: u32,
}

/// One position fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub device_id: String,
    pub ts: Timestamp,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub accuracy_m: f64,
}

impl GpsFix {
    pub fn validate(&self) -> Result<(), String> {
        if self.device_id.is_empty() {
            return Err("empty device_id".into());
        }
        if !(self.lat_deg.is_finite() && (-90.0..=90.0).contains(&self.lat_deg)) {
            return Err(format!("latitude {} out of range", self.lat_deg));
        }
        if !(self.lon_deg.is_finite() && (-180.0..=180.0).contains(&self.lon_deg)) {
            return Err(format!("longitude {} out of range", self.lon_deg));
        }
        if !(self.accuracy_m.is_finite() && self.accuracy_m > 0.0) {
            return Err(format!("accuracy {} must be positive", self.accuracy_m));
        }
        Ok(())
    }

    /// Whether the accuracy lies within what phones report in practice.
    pub fn accuracy_in_distribution(&self) -> bool {
        (GPS_ACCURACY_MIN_M..=GPS_ACCURACY_MAX_M).contains(&self.accuracy_m)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.lat_deg, self.lon_deg)
    }
}

/// What a phone uploads when it reaches the central store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub device_id: String,
    pub records: Vec<Record>,
    pub size_bits: u64,
    pub covers: TimeInterval,
}

/// Rebuild beat occurrence times from reception-stamped R-R samples.
///
/// Samples are split into runs wherever a sequence number is skipped or the
/// reception spacing disagrees with the incoming interval by more than
/// `gap_tolerance_ms`. Within a run, beat times are the cumulative sum of the
/// intervals, shifted by the integer offset that makes the mean residual
/// against reception times as close to zero as millisecond resolution allows.
pub fn reconstruct_beat_times(
    samples: &[RrSample],
    gap_tolerance_ms: i64,
) -> Result<Vec<ReconstructedBeat>, IngestError> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    for s in samples {
        if s.device_id != first.device_id {
            return Err(IngestError::MixedDevice(first.device_id.clone(), s.device_id.clone()));
        }
        s.validate()
            .map_err(|reason| IngestError::InvalidSample { seq: s.seq, reason })?;
    }
    for w in samples.windows(2) {
        if w[1].seq <= w[0].seq || w[1].reception_ts <= w[0].reception_ts {
            return Err(IngestError::UnsortedInput(w[1].seq));
        }
    }

    let mut out = Vec::with_capacity(samples.len());
    let mut run_start = 0;
    let mut run_idx = 0u32;
    for k in 1..=samples.len() {
        let split = k == samples.len() || {
            let (prev, cur) = (&samples[k - 1], &samples[k]);
            let spacing = cur.reception_ts - prev.reception_ts;
            cur.seq != prev.seq + 1 || (spacing - cur.rr_ms as i64).abs() > gap_tolerance_ms
        };
        if split {
            anchor_run(&samples[run_start..k], run_idx, &mut out);
            run_start = k;
            run_idx += 1;
        }
    }
    Ok(out)
}

fn anchor_run(run: &[RrSample], run_idx: u32, out: &mut Vec<ReconstructedBeat>) {
    let mut cum = 0i64;
    let offsets: Vec<i64> = run
        .iter()
        .map(|s| {
            cum += s.rr_ms as i64;
            cum
        })
        .collect();
    let residual_sum: i128 = run
        .iter()
        .zip(&offsets)
        .map(|(s, c)| (s.reception_ts.millis() - c) as i128)
        .sum();
    let anchor = div_round(residual_sum, run.len() as i128) as i64;
    out.extend(run.iter().zip(&offsets).map(|(s, c)| ReconstructedBeat {
        device_id: s.device_id.clone(),
        seq: s.seq,
        beat_ts: Timestamp(anchor + c),
        rr_ms: s.rr_ms,
        run: run_idx,
    }));
}

/// Integer division rounding half away from zero.
fn div_round(num: i128, den: i128) -> i128 {
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den {
        q + num.signum()
    } else {
        q
    }
}

/// Splits reconstructed beats into their contiguous runs.
pub fn runs(beats: &[ReconstructedBeat]) -> Vec<&[ReconstructedBeat]> {
    beats.chunk_by(|a, b| a.run == b.run).collect()
}

/// Bits per second generated by a stream of fixed-size samples, one per beat.
pub fn data_rate_estimate(bytes_per_sample: u32, hr_bpm: f64) -> Result<f64, IngestError> {
    if bytes_per_sample == 0 {
        return Err(IngestError::NonPositiveInput(0.0));
    }
    if !(hr_bpm > 0.0) {
        return Err(IngestError::NonPositiveInput(hr_bpm));
    }
    Ok(bytes_per_sample as f64 * 8.0 * hr_bpm / 60.0)
}

/// Seconds needed to push `data_bits` through a link of the given rate.
pub fn estimate_sync_duration(data_bits: f64, link_rate_bits_per_s: f64) -> Result<f64, IngestError> {
    for v in [data_bits, link_rate_bits_per_s] {
        if !(v > 0.0) {
            return Err(IngestError::NonPositiveInput(v));
        }
    }
    Ok(data_bits / link_rate_bits_per_s)
}

/// Collects the device's records newer than `records_since` into an upload
/// batch, ordered RR by seq, then GPS by time, then HRV windows by start.
/// Size accounting uses the canonical JSONL encoding, newline included.
pub fn build_sync_batch<'a, I>(
    device_id: &str,
    records_since: Timestamp,
    all_records: I,
) -> Result<SyncBatch, IngestError>
where
    I: IntoIterator<Item = &'a Record>,
{
    let mut seen = false;
    let mut records: Vec<Record> = Vec::new();
    for r in all_records {
        if r.device_id() != device_id {
            continue;
        }
        seen = true;
        if r.timestamp() > records_since {
            records.push(r.clone());
        }
    }
    if !seen {
        return Err(IngestError::UnknownDevice(device_id.to_string()));
    }
    records.sort_by_key(|r| (r.kind(), r.ordinal()));

    let size_bits = records.iter().map(|r| (r.to_json_line().len() as u64 + 1) * 8).sum();
    let covers = match (
        records.iter().map(Record::timestamp).min(),
        records.iter().map(Record::timestamp).max(),
    ) {
        (Some(lo), Some(hi)) => TimeInterval::new(lo, hi.add_ms(1)),
        _ => TimeInterval::new(records_since, records_since),
    };
    Ok(SyncBatch { device_id: device_id.to_string(), records, size_bits, covers })
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| IngestError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<(), IngestError> {
    for item in items {
        serde_json::to_writer(&mut writer, item)
            .map_err(|e| IngestError::Io(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// File name of a per-device stream: `<device_id>.<kind>.jsonl`.
pub fn stream_file_name(device_id: &str, kind: RecordKind) -> String {
    format!("{device_id}.{}.jsonl", kind.as_str())
}

/// Inverse of [`stream_file_name`].
pub fn parse_stream_file_name(name: &str) -> Option<(String, RecordKind)> {
    let stem = name.strip_suffix(".jsonl")?;
    let (device, kind) = stem.rsplit_once('.')?;
    if device.is_empty() {
        return None;
    }
    Some((device.to_string(), kind.parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seq: u64, rr_ms: u32, reception: i64) -> RrSample {
        RrSample { device_id: "s1".into(), seq, rr_ms, reception_ts: Timestamp(reception) }
    }

    fn gaps(beats: &[ReconstructedBeat]) -> Vec<i64> {
        beats.windows(2).map(|w| w[1].beat_ts - w[0].beat_ts).collect()
    }

    fn mean_residual(beats: &[ReconstructedBeat], samples: &[RrSample]) -> f64 {
        let sum: i64 = beats
            .iter()
            .zip(samples)
            .map(|(b, s)| b.beat_ts - s.reception_ts)
            .sum();
        sum as f64 / beats.len() as f64
    }

    #[test]
    fn jittered_constant_intervals() {
        let t0 = 1_000_000;
        let samples = vec![sample(0, 1000, t0), sample(1, 1000, t0 + 1025), sample(2, 1000, t0 + 1990)];
        let beats = reconstruct_beat_times(&samples, DEFAULT_GAP_TOLERANCE_MS).unwrap();
        assert_eq!(gaps(&beats), vec![1000, 1000]);
    }

    #[test]
    fn anchor_is_mean_residual() {
        let t0 = 5_000;
        let samples = vec![sample(0, 800, t0), sample(1, 810, t0 + 812), sample(2, 790, t0 + 1601)];
        let beats = reconstruct_beat_times(&samples, DEFAULT_GAP_TOLERANCE_MS).unwrap();
        assert_eq!(gaps(&beats), vec![810, 790]);
        // anchor = t0 + mean(-800, -798, -799) = t0 - 799
        assert_eq!(beats[0].beat_ts, Timestamp(t0 - 799 + 800));
        assert!(mean_residual(&beats, &samples).abs() <= 0.5);
    }

    #[test]
    fn reception_gap_splits_runs() {
        let mut samples = Vec::new();
        let mut t = 0;
        for seq in 0..10 {
            t += 800;
            samples.push(sample(seq, 800, t));
        }
        t += 10_000;
        for seq in 10..20 {
            t += 800;
            samples.push(sample(seq, 800, t));
        }
        let beats = reconstruct_beat_times(&samples, DEFAULT_GAP_TOLERANCE_MS).unwrap();
        let r = runs(&beats);
        assert_eq!(r.len(), 2);
        for run in r {
            assert!(gaps(run).iter().all(|&g| g == 800));
        }
    }

    #[test]
    fn skipped_seq_splits_runs() {
        let samples = vec![sample(0, 800, 800), sample(1, 800, 1600), sample(3, 800, 2400)];
        let beats = reconstruct_beat_times(&samples, DEFAULT_GAP_TOLERANCE_MS).unwrap();
        assert_eq!(runs(&beats).len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let unsorted = vec![sample(1, 800, 800), sample(0, 800, 1600)];
        assert_eq!(
            reconstruct_beat_times(&unsorted, 500),
            Err(IngestError::UnsortedInput(0))
        );
        let mut mixed = vec![sample(0, 800, 800), sample(1, 800, 1600)];
        mixed[1].device_id = "s2".into();
        assert!(matches!(reconstruct_beat_times(&mixed, 500), Err(IngestError::MixedDevice(..))));
        let implausible = vec![sample(0, 150, 800)];
        assert!(matches!(
            reconstruct_beat_times(&implausible, 500),
            Err(IngestError::InvalidSample { .. })
        ));
        assert_eq!(reconstruct_beat_times(&[], 500), Ok(vec![]));
    }

    #[test]
    fn rate_formula() {
        assert_eq!(data_rate_estimate(40, 66.0).unwrap(), 352.0);
        assert_eq!(data_rate_estimate(40, 60.0).unwrap(), 320.0);
        assert_eq!(data_rate_estimate(1, 60.0).unwrap(), 8.0);
        assert!(data_rate_estimate(0, 60.0).is_err());
        assert!(data_rate_estimate(40, 0.0).is_err());
        assert!(data_rate_estimate(40, f64::NAN).is_err());
    }

    #[test]
    fn sync_duration() {
        assert!((estimate_sync_duration(29e6, BLE4_RATE_BITS_PER_S).unwrap() - 107.407).abs() < 1e-3);
        assert_eq!(estimate_sync_duration(0.27e6, 0.27e6).unwrap(), 1.0);
        assert!((estimate_sync_duration(2.43e8, 0.27e6).unwrap() - 900.0).abs() < 1e-9);
        assert!(estimate_sync_duration(-1.0, 1.0).is_err());
        assert!(estimate_sync_duration(1.0, 0.0).is_err());
    }

    fn fix(ts: i64) -> GpsFix {
        GpsFix { device_id: "s1".into(), ts: Timestamp(ts), lat_deg: 45.0, lon_deg: 4.0, accuracy_m: 8.0 }
    }

    #[test]
    fn batch_after_cutoff_is_empty() {
        let recs = vec![Record::Rr(sample(0, 800, 100)), Record::Gps(fix(50))];
        let batch = build_sync_batch("s1", Timestamp(1000), &recs).unwrap();
        assert!(batch.records.is_empty());
        assert_eq!(batch.size_bits, 0);
        assert!(matches!(
            build_sync_batch("s9", Timestamp(0), &recs),
            Err(IngestError::UnknownDevice(_))
        ));
    }

    #[test]
    fn batch_orders_rr_then_gps() {
        let recs = vec![
            Record::Gps(fix(300)),
            Record::Rr(sample(1, 800, 1600)),
            Record::Gps(fix(200)),
            Record::Rr(sample(0, 800, 800)),
        ];
        let batch = build_sync_batch("s1", Timestamp::MIN, &recs).unwrap();
        let keys: Vec<(RecordKind, i64)> = batch.records.iter().map(|r| (r.kind(), r.ordinal())).collect();
        assert_eq!(
            keys,
            vec![(RecordKind::Rr, 0), (RecordKind::Rr, 1), (RecordKind::Gps, 200), (RecordKind::Gps, 300)]
        );
        let expected: u64 = recs.iter().map(|r| (r.to_json_line().len() as u64 + 1) * 8).sum();
        assert_eq!(batch.size_bits, expected);
        assert_eq!(batch.covers, TimeInterval::new(Timestamp(200), Timestamp(1601)));
    }

    #[test]
    fn stream_names() {
        assert_eq!(stream_file_name("subject1", RecordKind::Rr), "subject1.rr.jsonl");
        assert_eq!(
            parse_stream_file_name("subject1.gps.jsonl"),
            Some(("subject1".into(), RecordKind::Gps))
        );
        assert_eq!(parse_stream_file_name("clocks.json"), None);
        assert_eq!(parse_stream_file_name("notes.txt.jsonl"), None);
    }
}
