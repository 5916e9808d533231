//! End-to-end analysis: ingest, clock alignment, beat reconstruction, HRV,
//! geo fusion and activity segmentation.
//!
//! Every stage publishes its output on the bus. [`ReportCollector`] is a
//! passive subscriber that rebuilds the report bundle from those topics alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::activity::{classify_segments, segments_csv, ActivityError, ActivitySegment};
use crate::bus::{topic_name, Bus, BusConfig, BusError, Publisher, Subscription, TopicHandle};
use crate::config::Config;
use crate::geo::{detect_colocation_with, detect_movement, movement_csv, to_geojson, ColocationEvent, MovementInterval};
use crate::hrv::{compute_hrv_windows, hr_normalized_csv, hrv_csv, normalized_hr_series, HrvWindow, NormalizedHrSeries};
use crate::ingest::{
    build_sync_batch, parse_stream_file_name, read_jsonl, reconstruct_beat_times, GpsFix, ReconstructedBeat, RrSample,
};
use crate::record::{Payload, Record, RecordKind, TimeInterval, Timestamp};
use crate::scenario::{GroundTruth, SimulatedData, CLOCKS_FILE, GROUND_TRUTH_FILE};
use crate::storage::Store;
use crate::timesync::{check_skew, load_clock_config, to_common_clock, ClockModel, SkewReport};

pub const REPORT_DIR: &str = "report";
pub const STORE_DIR: &str = "store";
/// Topic subject used for outputs that concern the whole group.
pub const GROUP: &str = "group";

pub const HRV_CSV: &str = "hrv.csv";
pub const SEGMENTS_CSV: &str = "segments.csv";
pub const COLOCATION_GEOJSON: &str = "colocation.geojson";
pub const HR_NORMALIZED_CSV: &str = "hr_normalized.csv";
pub const MOVEMENT_CSV: &str = "movement.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Storage,
    Timesync,
    Reconstruction,
    Hrv,
    Geo,
    Segmentation,
    Bus,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Storage => "storage",
            Stage::Timesync => "timesync",
            Stage::Reconstruction => "reconstruction",
            Stage::Hrv => "hrv",
            Stage::Geo => "geo",
            Stage::Segmentation => "segmentation",
            Stage::Bus => "bus",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
    /// Bad or missing input, as opposed to a failure while processing it.
    pub input: bool,
}

impl PipelineError {
    pub fn input(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError { stage, message: message.to_string(), input: true }
    }

    pub fn failure(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError { stage, message: message.to_string(), input: false }
    }

    /// 1 for input errors, 2 for pipeline failures.
    pub fn exit_code(&self) -> i32 {
        if self.input {
            1
        } else {
            2
        }
    }
}

fn bus_err(e: BusError) -> PipelineError {
    PipelineError::failure(Stage::Bus, e)
}

/// Raw device streams plus one clock model per device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub rr: BTreeMap<String, Vec<RrSample>>,
    pub gps: BTreeMap<String, Vec<GpsFix>>,
    pub clocks: BTreeMap<String, ClockModel>,
}

impl From<&SimulatedData> for Inputs {
    fn from(d: &SimulatedData) -> Self {
        Inputs { rr: d.rr.clone(), gps: d.gps.clone(), clocks: d.clocks.clone() }
    }
}

impl Inputs {
    pub fn devices(&self) -> BTreeSet<String> {
        self.rr.keys().chain(self.gps.keys()).cloned().collect()
    }

    /// Reads `<device>.rr.jsonl` and `<device>.gps.jsonl` streams and the
    /// optional `clocks.json` from `dir`. Devices missing from the clock file
    /// are taken to run on the common clock.
    pub fn load(dir: &Path, default_bound_ms: i64) -> Result<Self, PipelineError> {
        let entries = fs::read_dir(dir)
            .map_err(|e| PipelineError::input(Stage::Ingest, format!("cannot read {}: {e}", dir.display())))?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();

        let mut inputs = Inputs::default();
        for name in names {
            let Some((device, kind)) = parse_stream_file_name(&name) else {
                continue;
            };
            let open = || {
                fs::File::open(dir.join(&name))
                    .map(std::io::BufReader::new)
                    .map_err(|e| PipelineError::input(Stage::Ingest, format!("{name}: {e}")))
            };
            let parse_err = |e| PipelineError::input(Stage::Ingest, format!("{name}: {e}"));
            match kind {
                RecordKind::Rr => {
                    inputs.rr.insert(device, read_jsonl(open()?).map_err(parse_err)?);
                }
                RecordKind::Gps => {
                    inputs.gps.insert(device, read_jsonl(open()?).map_err(parse_err)?);
                }
                _ => {}
            }
        }
        if inputs.rr.is_empty() && inputs.gps.is_empty() {
            return Err(PipelineError::input(Stage::Ingest, "no input streams"));
        }

        let clock_path = dir.join(CLOCKS_FILE);
        let mut clocks = if clock_path.exists() {
            load_clock_config(&clock_path).map_err(|e| PipelineError::input(Stage::Timesync, e))?
        } else {
            BTreeMap::new()
        };
        for dev in inputs.devices() {
            clocks.entry(dev.clone()).or_insert_with(|| {
                log::warn!("no clock model for {dev}; assuming zero offset");
                ClockModel::new(&dev, 0).with_bound(default_bound_ms)
            });
        }
        inputs.clocks = clocks;
        Ok(inputs)
    }

    /// The device's records, as they would be uploaded.
    pub fn records_of(&self, device: &str) -> Vec<Record> {
        let rr = self.rr.get(device).into_iter().flatten().cloned().map(Record::Rr);
        let gps = self.gps.get(device).into_iter().flatten().cloned().map(Record::Gps);
        rr.chain(gps).collect()
    }
}

/// Everything the pipeline reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub hrv: Vec<HrvWindow>,
    pub normalized: Vec<NormalizedHrSeries>,
    /// Fixes on the common clock.
    pub fixes: BTreeMap<String, Vec<GpsFix>>,
    pub movement: Vec<MovementInterval>,
    pub colocation: Vec<ColocationEvent>,
    pub segments: Vec<ActivitySegment>,
}

impl ReportBundle {
    /// Puts every list in its canonical order.
    fn canonicalize(&mut self) {
        self.hrv.sort_by(|a, b| (&a.device_id, a.window_start).cmp(&(&b.device_id, b.window_start)));
        self.normalized.sort_by(|a, b| a.device_id.cmp(&b.device_id));
        self.movement.sort_by(|a, b| (&a.device_id, a.start_ts).cmp(&(&b.device_id, b.start_ts)));
        self.colocation
            .sort_by(|a, b| (a.start_ts, &a.subject_ids, a.end_ts).cmp(&(b.start_ts, &b.subject_ids, b.end_ts)));
        self.segments.sort_by_key(|s| s.start_ts);
        for fixes in self.fixes.values_mut() {
            fixes.sort_by_key(|f| f.ts);
        }
    }

    /// Report files by name.
    pub fn files(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            (HRV_CSV, hrv_csv(&self.hrv)),
            (SEGMENTS_CSV, segments_csv(&self.segments)),
            (COLOCATION_GEOJSON, to_geojson(&self.fixes, &self.colocation)),
            (HR_NORMALIZED_CSV, hr_normalized_csv(&self.normalized)),
            (MOVEMENT_CSV, movement_csv(&self.movement)),
        ])
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), PipelineError> {
        let io = |e: std::io::Error| PipelineError::failure(Stage::Report, format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        for (name, body) in self.files() {
            fs::write(dir.join(name), body).map_err(io)?;
        }
        Ok(())
    }
}

/// Handles of the topics a run publishes on.
pub struct ReportTopics {
    handles: BTreeMap<String, TopicHandle>,
}

const SUBJECT_KINDS: [RecordKind; 5] =
    [RecordKind::Rr, RecordKind::Gps, RecordKind::Hrv, RecordKind::HrNormalized, RecordKind::Movement];
const GROUP_KINDS: [RecordKind; 2] = [RecordKind::Colocation, RecordKind::Activity];

impl ReportTopics {
    pub fn get(&self, kind: RecordKind, subject: &str) -> Result<&TopicHandle, BusError> {
        let name = topic_name(kind, subject);
        self.handles.get(&name).ok_or(BusError::UnknownTopic(name))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.handles.keys().map(String::as_str)
    }
}

/// Topics of every stage for the given subjects. Creating them before any
/// subscriber attaches lets a collector see the whole run.
pub fn declare_topics(bus: &Bus, subjects: &BTreeSet<String>) -> Result<ReportTopics, PipelineError> {
    let mut handles = BTreeMap::new();
    let wanted = subjects
        .iter()
        .flat_map(|s| SUBJECT_KINDS.map(|k| (k, s.as_str())))
        .chain(GROUP_KINDS.map(|k| (k, GROUP)));
    for (kind, subject) in wanted {
        let name = topic_name(kind, subject);
        let handle = bus.ensure_topic(&name, kind).map_err(bus_err)?;
        handles.insert(name, handle);
    }
    Ok(ReportTopics { handles })
}

struct Publishers {
    topics: ReportTopics,
    ingest: Publisher,
    timesync: Publisher,
    hrv: Publisher,
    geo: Publisher,
    activity: Publisher,
}

impl Publishers {
    fn new(bus: &Bus, subjects: &BTreeSet<String>) -> Result<Self, PipelineError> {
        Ok(Publishers {
            topics: declare_topics(bus, subjects)?,
            ingest: bus.publisher("ingest"),
            timesync: bus.publisher("timesync"),
            hrv: bus.publisher("hrv"),
            geo: bus.publisher("geo"),
            activity: bus.publisher("activity"),
        })
    }

    fn send(&self, publisher: &Publisher, kind: RecordKind, subject: &str, payload: Payload) -> Result<(), PipelineError> {
        let topic = self.topics.get(kind, subject).map_err(bus_err)?;
        publisher.publish(topic, payload).map_err(bus_err)?;
        Ok(())
    }
}

fn to_common(ts: Timestamp, model: &ClockModel) -> Result<Timestamp, PipelineError> {
    to_common_clock(ts, model).map_err(|e| PipelineError::failure(Stage::Timesync, e))
}

fn model_for<'a>(inputs: &'a Inputs, dev: &str) -> Result<&'a ClockModel, PipelineError> {
    inputs
        .clocks
        .get(dev)
        .ok_or_else(|| PipelineError::input(Stage::Timesync, format!("no clock model for {dev}")))
}

/// Beats of one subject on the common clock.
pub fn aligned_beats(
    samples: &[RrSample],
    model: &ClockModel,
    gap_tolerance_ms: i64,
) -> Result<Vec<ReconstructedBeat>, PipelineError> {
    let mut beats = reconstruct_beat_times(samples, gap_tolerance_ms)
        .map_err(|e| PipelineError::failure(Stage::Reconstruction, e))?;
    for b in &mut beats {
        b.beat_ts = to_common(b.beat_ts, model)?;
    }
    Ok(beats)
}

/// Runs every stage on in-memory inputs. When `bus` is given, each stage's
/// output is published on it.
pub fn analyze(inputs: &Inputs, config: &Config, bus: Option<&Bus>) -> Result<ReportBundle, PipelineError> {
    let subjects = inputs.devices();
    if subjects.is_empty() {
        return Err(PipelineError::input(Stage::Ingest, "no input streams"));
    }
    let pubs = bus.map(|b| Publishers::new(b, &subjects)).transpose()?;
    let publish = |pick: fn(&Publishers) -> &Publisher, kind: RecordKind, subject: &str, payload: Payload| {
        match &pubs {
            Some(p) => p.send(pick(p), kind, subject, payload),
            None => Ok(()),
        }
    };

    // timesync
    let models: Vec<ClockModel> = subjects
        .iter()
        .map(|d| model_for(inputs, d).cloned())
        .collect::<Result<_, _>>()?;
    let skew: SkewReport = check_skew(&models).map_err(|e| PipelineError::failure(Stage::Timesync, e))?;
    if !skew.pass {
        return Err(PipelineError::failure(
            Stage::Timesync,
            format!("clock skew {} ms between {:?} exceeds bounds", skew.max_gap_ms, skew.worst_pair),
        ));
    }

    for (dev, samples) in &inputs.rr {
        for s in samples {
            publish(|p| &p.ingest, RecordKind::Rr, dev, Payload::Rr(s.clone()))?;
        }
    }

    let mut bundle = ReportBundle::default();

    // geo: fixes to the common clock
    for (dev, fixes) in &inputs.gps {
        let model = model_for(inputs, dev)?;
        let mut aligned = Vec::with_capacity(fixes.len());
        for f in fixes {
            let mut f = f.clone();
            f.ts = to_common(f.ts, model)?;
            aligned.push(f);
        }
        aligned.sort_by_key(|f| f.ts);
        for f in &aligned {
            publish(|p| &p.timesync, RecordKind::Gps, dev, Payload::Gps(f.clone()))?;
        }
        bundle.fixes.insert(dev.clone(), aligned);
    }

    // reconstruction and HRV, one thread per subject
    let hrv_params = &config.hrv.params;
    let per_subject: Vec<Result<(Vec<HrvWindow>, NormalizedHrSeries), PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .rr
            .iter()
            .map(|(dev, samples)| {
                let publish = &publish;
                s.spawn(move || {
                    let model = model_for(inputs, dev)?;
                    let beats = aligned_beats(samples, model, config.reconstruction.gap_tolerance_ms)?;
                    let hrv_err = |e| PipelineError::failure(Stage::Hrv, format!("{dev}: {e}"));
                    let windows = compute_hrv_windows(&beats, config.hrv.windows, hrv_params).map_err(hrv_err)?;
                    let series = normalized_hr_series(&beats, hrv_params).map_err(hrv_err)?;
                    for w in &windows {
                        publish(|p| &p.hrv, RecordKind::Hrv, dev, Payload::Hrv(w.clone()))?;
                    }
                    publish(|p| &p.hrv, RecordKind::HrNormalized, dev, Payload::HrNormalized(series.clone()))?;
                    Ok((windows, series))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("subject worker panicked")).collect()
    });
    for r in per_subject {
        let (windows, series) = r?;
        bundle.hrv.extend(windows);
        bundle.normalized.push(series);
    }

    // movement and co-location
    for (dev, fixes) in &bundle.fixes {
        let intervals = detect_movement(fixes, &config.geo.movement)
            .map_err(|e| PipelineError::failure(Stage::Geo, format!("{dev}: {e}")))?;
        for m in &intervals {
            publish(|p| &p.geo, RecordKind::Movement, dev, Payload::Movement(m.clone()))?;
        }
        bundle.movement.extend(intervals);
    }
    bundle.colocation = detect_colocation_with(&bundle.fixes, &config.geo.colocation)
        .map_err(|e| PipelineError::failure(Stage::Geo, e))?;
    for e in &bundle.colocation {
        publish(|p| &p.geo, RecordKind::Colocation, GROUP, Payload::Colocation(e.clone()))?;
    }

    // segmentation
    let series: BTreeMap<String, NormalizedHrSeries> =
        bundle.normalized.iter().map(|s| (s.device_id.clone(), s.clone())).collect();
    match classify_segments(&series, &bundle.movement, &config.activity) {
        Ok(segments) => bundle.segments = segments,
        Err(ActivityError::FewerThanTwoSubjects(n)) => {
            log::warn!("segmentation skipped: {n} subject(s), need at least two");
        }
        Err(e) => return Err(PipelineError::failure(Stage::Segmentation, e)),
    }
    for s in &bundle.segments {
        publish(|p| &p.activity, RecordKind::Activity, GROUP, Payload::Activity(s.clone()))?;
    }

    bundle.canonicalize();
    Ok(bundle)
}

/// Passive subscriber on every report topic.
pub struct ReportCollector {
    subscriptions: Vec<Subscription>,
}

impl ReportCollector {
    /// Subscribes to every topic currently declared on the bus.
    pub fn attach(bus: &Bus) -> Result<Self, PipelineError> {
        let mut subscriptions = Vec::new();
        for name in bus.topic_names() {
            let topic = bus.topic(&name).map_err(bus_err)?;
            subscriptions.push(bus.subscribe(&topic, "report-collector").map_err(bus_err)?);
        }
        Ok(ReportCollector { subscriptions })
    }

    /// Drains everything delivered so far into a bundle.
    pub fn collect(&self) -> ReportBundle {
        let mut bundle = ReportBundle::default();
        for sub in &self.subscriptions {
            for env in sub.drain() {
                match &env.payload {
                    Payload::Gps(f) if env.publisher_id == "timesync" => {
                        bundle.fixes.entry(f.device_id.clone()).or_default().push(f.clone());
                    }
                    Payload::Hrv(w) => bundle.hrv.push(w.clone()),
                    Payload::HrNormalized(s) => bundle.normalized.push(s.clone()),
                    Payload::Movement(m) => bundle.movement.push(m.clone()),
                    Payload::Colocation(e) => bundle.colocation.push(e.clone()),
                    Payload::Activity(s) => bundle.segments.push(s.clone()),
                    _ => {}
                }
            }
        }
        bundle.canonicalize();
        bundle
    }
}

/// Uploads every device's streams to the store in `dir` and reads them back.
pub fn persist_and_reload(inputs: &Inputs, dir: &Path) -> Result<Inputs, PipelineError> {
    let store_err = |e: crate::storage::StoreError| PipelineError::failure(Stage::Storage, e);
    let mut store = Store::open(dir).map_err(store_err)?;
    for dev in inputs.devices() {
        let records = inputs.records_of(&dev);
        let batch = build_sync_batch(&dev, Timestamp::MIN, &records)
            .map_err(|e| PipelineError::input(Stage::Storage, e))?;
        let outcome = store
            .merge_batch(&batch)
            .map_err(|e| PipelineError::input(Stage::Storage, e))?;
        log::info!("{dev}: {} records stored, {} already present", outcome.inserted, outcome.duplicates);
    }
    store.flush().map_err(store_err)?;

    let mut out = Inputs { clocks: inputs.clocks.clone(), ..Inputs::default() };
    for dev in inputs.devices() {
        for rec in store.query(&dev, RecordKind::Rr, TimeInterval::everything()).map_err(store_err)? {
            if let Record::Rr(s) = rec.body {
                out.rr.entry(dev.clone()).or_default().push(s);
            }
        }
        let mut fixes: Vec<GpsFix> = store
            .query(&dev, RecordKind::Gps, TimeInterval::everything())
            .map_err(store_err)?
            .into_iter()
            .filter_map(|r| match r.body {
                Record::Gps(g) => Some(g),
                _ => None,
            })
            .collect();
        if !fixes.is_empty() {
            fixes.sort_by_key(|f| f.ts);
            out.gps.insert(dev.clone(), fixes);
        }
    }
    for samples in out.rr.values_mut() {
        samples.sort_by_key(|s| s.seq);
    }
    Ok(out)
}

/// Full run on a data directory: load streams, persist them to
/// `<data_dir>/store`, analyze, and write the bundle to `<data_dir>/report`.
/// The files are rendered from what a passive bus subscriber collected.
pub fn run_pipeline(data_dir: &Path, config: &Config) -> Result<ReportBundle, PipelineError> {
    let raw = Inputs::load(data_dir, config.clock.skew_bound_ms)?;
    let inputs = persist_and_reload(&raw, &data_dir.join(STORE_DIR))?;

    let bus = Bus::new(BusConfig { high_water: config.bus.high_water });
    declare_topics(&bus, &inputs.devices())?;
    let collector = ReportCollector::attach(&bus)?;
    let direct = analyze(&inputs, config, Some(&bus))?;
    let collected = collector.collect();
    if collected != direct {
        return Err(PipelineError::failure(Stage::Report, "bus view of the run differs from the direct result"));
    }
    collected.write_to(&data_dir.join(REPORT_DIR))?;
    Ok(collected)
}

fn read_report(dir: &Path, name: &str) -> Result<String, PipelineError> {
    fs::read_to_string(dir.join(name))
        .map_err(|e| PipelineError::input(Stage::Report, format!("{name}: {e} (run the pipeline first)")))
}

/// (label, start, end) rows of a segments CSV.
pub fn parse_segments_csv(text: &str) -> Result<Vec<(String, Timestamp, Timestamp)>, PipelineError> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let bad = || PipelineError::input(Stage::Report, format!("bad segments row {l:?}"));
            if cols.len() < 3 {
                return Err(bad());
            }
            let ts = |s: &str| s.parse::<i64>().map(Timestamp).map_err(|_| bad());
            Ok((cols[2].to_string(), ts(cols[0])?, ts(cols[1])?))
        })
        .collect()
}

/// Human-readable summary of a written report, compared with the ground truth
/// when the data directory holds one.
pub fn summarize_report(data_dir: &Path) -> Result<String, PipelineError> {
    use std::fmt::Write;
    let report = data_dir.join(REPORT_DIR);
    let segments = parse_segments_csv(&read_report(&report, SEGMENTS_CSV)?)?;
    let hrv_rows = read_report(&report, HRV_CSV)?.lines().count().saturating_sub(1);
    let movement_rows = read_report(&report, MOVEMENT_CSV)?.lines().count().saturating_sub(1);
    let geo: serde_json::Value = serde_json::from_str(&read_report(&report, COLOCATION_GEOJSON)?)
        .map_err(|e| PipelineError::input(Stage::Report, format!("{COLOCATION_GEOJSON}: {e}")))?;
    let events = geo["features"]
        .as_array()
        .map(|f| f.iter().filter(|x| x["properties"]["kind"] == "colocation").count())
        .unwrap_or(0);

    let mut out = String::new();
    let _ = writeln!(out, "hrv windows:        {hrv_rows}");
    let _ = writeln!(out, "movement intervals: {movement_rows}");
    let _ = writeln!(out, "colocation events:  {events}");
    let _ = writeln!(out, "segments:");
    for (label, start, end) in &segments {
        let _ = writeln!(out, "  {label:<9} {start} .. {end} ({} s)", (*end - *start) / 1000);
    }

    let truth_path = data_dir.join(GROUND_TRUTH_FILE);
    if truth_path.exists() {
        let truth = GroundTruth::load(&truth_path).map_err(|e| PipelineError::input(Stage::Report, e))?;
        let expected: Vec<String> = truth.labels().iter().map(|l| l.to_string()).collect();
        let got: Vec<String> = segments.iter().map(|s| s.0.clone()).collect();
        let _ = writeln!(out, "ground truth phases: {}", expected.join(", "));
        let _ = writeln!(out, "label sequence {}", if got == expected { "matches" } else { "differs" });
        if got == expected {
            for (seg, b) in segments.iter().skip(1).zip(truth.boundaries()) {
                let _ = writeln!(out, "  boundary before {:<9} off by {:+} s", seg.0, (seg.1 - b) as f64 / 1000.0);
            }
        }
    }
    Ok(out)
}
