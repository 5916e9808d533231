//! Central append-only record store.
//!
//! One JSONL file per (device, kind), named `<device_id>.<kind>.jsonl`, with
//! an in-memory key index rebuilt on open. Merging a sync batch is atomic and
//! idempotent: records whose key is already present are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hrv::HrvWindow;
use crate::ingest::{parse_stream_file_name, stream_file_name, GpsFix, RrSample, SyncBatch};
use crate::record::{Record, RecordKind, TimeInterval, Timestamp, UnknownKind};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed record #{index} in batch for {device:?}: {reason}")]
    MalformedRecord { device: String, index: usize, reason: String },
    #[error(transparent)]
    UnknownKind(#[from] UnknownKind),
    #[error("invalid query range")]
    InvalidRange,
    #[error("corrupt store file {file}: line {line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StoreKey {
    pub device_id: String,
    pub kind: RecordKind,
    /// seq for RR, fix time for GPS, window start for HRV.
    pub ordinal: i64,
}

impl StoreKey {
    pub fn of(record: &Record) -> Self {
        StoreKey { device_id: record.device_id().to_string(), kind: record.kind(), ordinal: record.ordinal() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub key: StoreKey,
    pub body: Record,
    pub received_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MergeOutcome {
    pub inserted: usize,
    pub duplicates: usize,
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    received_at: Timestamp,
    record: T,
}

fn encode_line(rec: &StoredRecord) -> String {
    let s = match &rec.body {
        Record::Rr(r) => serde_json::to_string(&Line { received_at: rec.received_at, record: r }),
        Record::Gps(g) => serde_json::to_string(&Line { received_at: rec.received_at, record: g }),
        Record::Hrv(h) => serde_json::to_string(&Line { received_at: rec.received_at, record: h }),
    };
    s.expect("stored records serialize infallibly")
}

fn decode_line(kind: RecordKind, line: &str) -> Result<(Timestamp, Record), String> {
    fn parse<T: for<'de> Deserialize<'de>>(line: &str) -> Result<Line<T>, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
    match kind {
        RecordKind::Rr => parse::<RrSample>(line).map(|l| (l.received_at, Record::Rr(l.record))),
        RecordKind::Gps => parse::<GpsFix>(line).map(|l| (l.received_at, Record::Gps(l.record))),
        RecordKind::Hrv => parse::<HrvWindow>(line).map(|l| (l.received_at, Record::Hrv(l.record))),
        other => Err(format!("{other} is not a stored kind")),
    }
}

type Partition = BTreeMap<i64, StoredRecord>;

/// Single-writer store. Readers that need isolation should work on a
/// [`Store::open`] of their own, which snapshots the files at open time.
pub struct Store {
    dir: Option<PathBuf>,
    partitions: BTreeMap<(String, RecordKind), Partition>,
    pending: BTreeMap<(String, RecordKind), Vec<String>>,
}

impl Store {
    /// A store with no backing files.
    pub fn in_memory() -> Self {
        Store { dir: None, partitions: BTreeMap::new(), pending: BTreeMap::new() }
    }

    /// Open (creating if needed) a store directory and rebuild the index.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = Store { dir: Some(dir.clone()), partitions: BTreeMap::new(), pending: BTreeMap::new() };

        let mut files: Vec<(String, String, RecordKind)> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some((device, kind)) = parse_stream_file_name(&name) {
                if kind.is_device_record() {
                    files.push((name, device, kind));
                }
            }
        }
        files.sort();
        for (name, device, kind) in files {
            let part = store.partitions.entry((device.clone(), kind)).or_default();
            let reader = BufReader::new(fs::File::open(dir.join(&name))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.is_empty() {
                    continue;
                }
                let corrupt = |message: String| StoreError::Corrupt { file: name.clone(), line: i + 1, message };
                let (received_at, body) = decode_line(kind, &line).map_err(corrupt)?;
                if body.device_id() != device {
                    return Err(corrupt(format!("record for {:?} in {device:?} file", body.device_id())));
                }
                let key = StoreKey::of(&body);
                part.entry(key.ordinal).or_insert(StoredRecord { key, body, received_at });
            }
        }
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Insert the batch's new records. Any malformed record rejects the whole
    /// batch and leaves the store untouched.
    pub fn merge_batch(&mut self, batch: &SyncBatch) -> Result<MergeOutcome, StoreError> {
        for (index, rec) in batch.records.iter().enumerate() {
            let malformed = |reason: String| StoreError::MalformedRecord {
                device: batch.device_id.clone(),
                index,
                reason,
            };
            if rec.device_id() != batch.device_id {
                return Err(malformed(format!("belongs to {:?}", rec.device_id())));
            }
            rec.validate().map_err(malformed)?;
        }

        let received_at = batch.covers.end;
        let mut outcome = MergeOutcome::default();
        for rec in &batch.records {
            let key = StoreKey::of(rec);
            let part_key = (key.device_id.clone(), key.kind);
            let part = self.partitions.entry(part_key.clone()).or_default();
            if part.contains_key(&key.ordinal) {
                outcome.duplicates += 1;
                continue;
            }
            let stored = StoredRecord { key: key.clone(), body: rec.clone(), received_at };
            if self.dir.is_some() {
                self.pending.entry(part_key).or_default().push(encode_line(&stored));
            }
            part.insert(key.ordinal, stored);
            outcome.inserted += 1;
        }
        Ok(outcome)
    }

    /// Append everything merged since the last flush to the backing files.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            self.pending.clear();
            return Ok(());
        };
        for ((device, kind), lines) in std::mem::take(&mut self.pending) {
            let path = dir.join(stream_file_name(&device, kind));
            let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
            for line in lines {
                w.write_all(line.as_bytes())?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Records of one device and kind whose primary timestamp falls in
    /// `range`, ordered by that timestamp.
    pub fn query(&self, device_id: &str, kind: RecordKind, range: TimeInterval) -> Result<Vec<StoredRecord>, StoreError> {
        if !kind.is_device_record() {
            return Err(UnknownKind(kind.as_str().to_string()).into());
        }
        if !range.is_valid() {
            return Err(StoreError::InvalidRange);
        }
        let Some(part) = self.partitions.get(&(device_id.to_string(), kind)) else {
            return Ok(Vec::new());
        };
        let mut out: Vec<StoredRecord> =
            part.values().filter(|r| range.contains(r.body.timestamp())).cloned().collect();
        out.sort_by_key(|r| (r.body.timestamp(), r.key.ordinal));
        Ok(out)
    }

    /// [`Store::query`] with the kind given by name, e.g. `"rr"`.
    pub fn query_named(&self, device_id: &str, kind: &str, range: TimeInterval) -> Result<Vec<StoredRecord>, StoreError> {
        let kind: RecordKind = kind.parse()?;
        self.query(device_id, kind, range)
    }

    pub fn devices(&self) -> BTreeSet<String> {
        self.partitions.keys().map(|(d, _)| d.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.partitions.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full store contents, for state comparisons.
    pub fn snapshot(&self) -> BTreeMap<StoreKey, StoredRecord> {
        self.partitions
            .values()
            .flat_map(|p| p.values())
            .map(|r| (r.key.clone(), r.clone()))
            .collect()
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if !self.pending.is_empty() {
            if let Err(e) = self.flush() {
                log::error!("store flush on drop failed: {e}");
            }
        }
    }
}
