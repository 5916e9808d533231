//! Multi-subject position fusion: co-location events and movement intervals.
//!
//! Phone positions come from GPS, Wi-Fi and cell towers, so their estimated
//! accuracy ranges from a few meters outdoors to over a kilometer indoors.
//! Every distance rule here is inflated by the accuracies of the fixes
//! involved rather than trusting raw coordinates. No map matching is
//! attempted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ingest::GpsFix;
use crate::record::{TimeInterval, Timestamp};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: ({0}, {1})")]
    OutOfRange(f64, f64),
    #[error("fixes for {0:?} are not sorted by time")]
    UnsortedFixes(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl LatLon {
    pub const fn new(lat_deg: f64, lon_deg: f64) -> Self {
        LatLon { lat_deg, lon_deg }
    }

    fn check(&self) -> Result<(), GeoError> {
        let ok = self.lat_deg.is_finite()
            && self.lon_deg.is_finite()
            && (-90.0..=90.0).contains(&self.lat_deg)
            && (-180.0..=180.0).contains(&self.lon_deg);
        if ok {
            Ok(())
        } else {
            Err(GeoError::OutOfRange(self.lat_deg, self.lon_deg))
        }
    }

    /// Point reached by travelling `distance_m` along the initial `bearing_deg`.
    pub fn destination(&self, bearing_deg: f64, distance_m: f64) -> LatLon {
        let d = distance_m / EARTH_RADIUS_M;
        let brg = bearing_deg.to_radians();
        let lat1 = self.lat_deg.to_radians();
        let lon1 = self.lon_deg.to_radians();
        let lat2 = (lat1.sin() * d.cos() + lat1.cos() * d.sin() * brg.cos()).asin();
        let lon2 = lon1 + (brg.sin() * d.sin() * lat1.cos()).atan2(d.cos() - lat1.sin() * lat2.sin());
        LatLon::new(lat2.to_degrees(), lon2.to_degrees())
    }

    /// Shift by a local east/north offset in meters.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> LatLon {
        let dlat = north_m / EARTH_RADIUS_M;
        let dlon = east_m / (EARTH_RADIUS_M * self.lat_deg.to_radians().cos());
        LatLon::new(self.lat_deg + dlat.to_degrees(), self.lon_deg + dlon.to_degrees())
    }
}

impl From<&GpsFix> for LatLon {
    fn from(f: &GpsFix) -> Self {
        LatLon::new(f.lat_deg, f.lon_deg)
    }
}

/// Great-circle distance in meters on a sphere of radius 6371 km.
pub fn haversine_m(a: LatLon, b: LatLon) -> Result<f64, GeoError> {
    a.check()?;
    b.check()?;
    Ok(haversine_unchecked(a, b))
}

fn haversine_unchecked(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon_deg - a.lon_deg).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// An interval during which a group of subjects shares a place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColocationEvent {
    pub subject_ids: BTreeSet<String>,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub centroid: LatLon,
    pub max_spread_m: f64,
}

impl ColocationEvent {
    pub fn interval(&self) -> TimeInterval {
        TimeInterval::new(self.start_ts, self.end_ts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementInterval {
    pub device_id: String,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub displacement_m: f64,
    pub mean_speed_mps: f64,
}

impl MovementInterval {
    pub fn interval(&self) -> TimeInterval {
        TimeInterval::new(self.start_ts, self.end_ts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColocationParams {
    pub time_tol_s: f64,
    pub dist_tol_m: f64,
    /// Instants of the same group closer than this are one event.
    pub merge_gap_s: f64,
    /// Spacing of the instants at which the rule is evaluated.
    pub step_s: f64,
}

impl Default for ColocationParams {
    fn default() -> Self {
        ColocationParams { time_tol_s: 2.0, dist_tol_m: 20.0, merge_gap_s: 60.0, step_s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovementParams {
    pub window_s: f64,
    pub speed_threshold_mps: f64,
    /// Displacement must exceed this multiple of the window's median accuracy.
    pub accuracy_gate: f64,
}

impl Default for MovementParams {
    fn default() -> Self {
        MovementParams { window_s: 60.0, speed_threshold_mps: 0.5, accuracy_gate: 2.0 }
    }
}

fn check_sorted(subject: &str, fixes: &[GpsFix]) -> Result<(), GeoError> {
    if fixes.windows(2).any(|w| w[1].ts < w[0].ts) {
        Err(GeoError::UnsortedFixes(subject.to_string()))
    } else {
        Ok(())
    }
}

/// The fix closest in time to `t`, if within `tol_ms`.
fn nearest_fix(fixes: &[GpsFix], t: Timestamp, tol_ms: i64) -> Option<&GpsFix> {
    let i = fixes.partition_point(|f| f.ts < t);
    let after = fixes.get(i);
    let before = i.checked_sub(1).and_then(|j| fixes.get(j));
    let best = match (before, after) {
        (Some(b), Some(a)) => {
            if t - b.ts <= a.ts - t {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    ((best.ts - t).abs() <= tol_ms).then_some(best)
}

/// Pairwise co-location rule: the fixes are within `dist_tol_m` once both
/// accuracy radii are added.
pub fn fixes_colocated(a: &GpsFix, b: &GpsFix, dist_tol_m: f64) -> bool {
    haversine_unchecked(a.into(), b.into()) <= dist_tol_m + a.accuracy_m + b.accuracy_m
}

/// Subject pairs co-located at instant `t`, each pair sorted, the list sorted.
pub fn colocated_pairs_at(
    fixes_by_subject: &BTreeMap<String, Vec<GpsFix>>,
    t: Timestamp,
    time_tol_s: f64,
    dist_tol_m: f64,
) -> Vec<(String, String)> {
    let tol_ms = (time_tol_s * 1000.0).round() as i64;
    let present: Vec<(&String, &GpsFix)> = fixes_by_subject
        .iter()
        .filter_map(|(s, f)| nearest_fix(f, t, tol_ms).map(|fix| (s, fix)))
        .collect();
    let mut pairs = Vec::new();
    for (i, (sa, fa)) in present.iter().enumerate() {
        for (sb, fb) in &present[i + 1..] {
            if fixes_colocated(fa, fb, dist_tol_m) {
                pairs.push(((*sa).clone(), (*sb).clone()));
            }
        }
    }
    pairs
}

/// Co-location events with the default merge gap and evaluation step.
pub fn detect_colocation(
    fixes_by_subject: &BTreeMap<String, Vec<GpsFix>>,
    time_tol_s: f64,
    dist_tol_m: f64,
) -> Result<Vec<ColocationEvent>, GeoError> {
    let params = ColocationParams { time_tol_s, dist_tol_m, ..ColocationParams::default() };
    detect_colocation_with(fixes_by_subject, &params)
}

struct Instant<'a> {
    t: Timestamp,
    fixes: Vec<&'a GpsFix>,
}

/// Groups are the connected components of the pairwise rule at each instant.
/// Instants of one group closer than `merge_gap_s` form one event, and events
/// contained in a larger event (more subjects, wider interval) are dropped.
pub fn detect_colocation_with(
    fixes_by_subject: &BTreeMap<String, Vec<GpsFix>>,
    params: &ColocationParams,
) -> Result<Vec<ColocationEvent>, GeoError> {
    if !(params.time_tol_s >= 0.0) {
        return Err(GeoError::InvalidParameter(format!("time_tol_s = {}", params.time_tol_s)));
    }
    if !(params.step_s > 0.0) {
        return Err(GeoError::InvalidParameter(format!("step_s = {}", params.step_s)));
    }
    for (s, f) in fixes_by_subject {
        check_sorted(s, f)?;
    }
    let lo = fixes_by_subject.values().filter_map(|f| f.first()).map(|f| f.ts).min();
    let hi = fixes_by_subject.values().filter_map(|f| f.last()).map(|f| f.ts).max();
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Ok(Vec::new());
    };

    let tol_ms = (params.time_tol_s * 1000.0).round() as i64;
    let step_ms = ((params.step_s * 1000.0).round() as i64).max(1);
    let subjects: Vec<&String> = fixes_by_subject.keys().collect();

    let mut by_group: BTreeMap<BTreeSet<String>, Vec<Instant>> = BTreeMap::new();
    let mut t = lo;
    while t <= hi {
        let present: Vec<(usize, &GpsFix)> = subjects
            .iter()
            .enumerate()
            .filter_map(|(i, s)| nearest_fix(&fixes_by_subject[*s], t, tol_ms).map(|f| (i, f)))
            .collect();
        let mut parent: Vec<usize> = (0..present.len()).collect();
        for a in 0..present.len() {
            for b in a + 1..present.len() {
                if fixes_colocated(present[a].1, present[b].1, params.dist_tol_m) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..present.len() {
            let root = find(&mut parent, i);
            components.entry(root).or_default().push(i);
        }
        for members in components.values().filter(|m| m.len() >= 2) {
            let set = members.iter().map(|&m| subjects[present[m].0].clone()).collect();
            let fixes = members.iter().map(|&m| present[m].1).collect();
            by_group.entry(set).or_default().push(Instant { t, fixes });
        }
        t = t.add_ms(step_ms);
    }

    let merge_ms = (params.merge_gap_s * 1000.0).round() as i64;
    let mut events = Vec::new();
    for (set, instants) in &by_group {
        for run in instants.chunk_by(|a, b| b.t - a.t < merge_ms) {
            if let Some(ev) = build_event(set, run) {
                events.push(ev);
            }
        }
    }

    let contained = |e: &ColocationEvent, f: &ColocationEvent| {
        e.subject_ids.is_subset(&f.subject_ids) && f.start_ts <= e.start_ts && e.end_ts <= f.end_ts
    };
    let keep: Vec<bool> = events
        .iter()
        .enumerate()
        .map(|(i, e)| !events.iter().enumerate().any(|(j, f)| j != i && e != f && contained(e, f)))
        .collect();
    let mut events: Vec<ColocationEvent> =
        events.into_iter().zip(keep).filter_map(|(e, k)| k.then_some(e)).collect();
    events.sort_by(|a, b| (a.start_ts, &a.subject_ids).cmp(&(b.start_ts, &b.subject_ids)));
    Ok(events)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn build_event(set: &BTreeSet<String>, run: &[Instant]) -> Option<ColocationEvent> {
    let mut start = run.first()?.t;
    let mut end = run.last()?.t;
    let (mut lat, mut lon, mut n) = (0.0, 0.0, 0usize);
    let mut spread: f64 = 0.0;
    for inst in run {
        for (i, f) in inst.fixes.iter().enumerate() {
            start = start.min(f.ts);
            end = end.max(f.ts);
            lat += f.lat_deg;
            lon += f.lon_deg;
            n += 1;
            for g in &inst.fixes[i + 1..] {
                spread = spread.max(haversine_unchecked((*f).into(), (*g).into()));
            }
        }
    }
    (end > start).then(|| ColocationEvent {
        subject_ids: set.clone(),
        start_ts: start,
        end_ts: end,
        centroid: LatLon::new(lat / n as f64, lon / n as f64),
        max_spread_m: spread,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Movement intervals of one subject.
///
/// Fixes are cut into tumbling windows. A window is moving when its net
/// displacement is fast enough and also larger than `accuracy_gate` times the
/// window's median accuracy, which keeps position noise from looking like
/// motion. Consecutive moving windows merge.
pub fn detect_movement(fixes: &[GpsFix], params: &MovementParams) -> Result<Vec<MovementInterval>, GeoError> {
    if !(params.window_s > 0.0) {
        return Err(GeoError::InvalidParameter(format!("window_s = {}", params.window_s)));
    }
    let Some(first) = fixes.first() else {
        return Ok(Vec::new());
    };
    check_sorted(&first.device_id, fixes)?;
    let window_ms = ((params.window_s * 1000.0).round() as i64).max(1);
    let t0 = first.ts;

    // (window index, first fix, last fix) of each moving window
    let mut moving: Vec<(i64, &GpsFix, &GpsFix)> = Vec::new();
    for w in fixes.chunk_by(|a, b| (a.ts - t0) / window_ms == (b.ts - t0) / window_ms) {
        let (a, b) = (&w[0], &w[w.len() - 1]);
        let span_s = (b.ts - a.ts) as f64 / 1000.0;
        if w.len() < 2 || span_s <= 0.0 {
            continue;
        }
        let disp = haversine_unchecked(a.into(), b.into());
        let mut acc: Vec<f64> = w.iter().map(|f| f.accuracy_m).collect();
        let gate = params.accuracy_gate * median(&mut acc);
        if disp / span_s >= params.speed_threshold_mps && disp > gate {
            moving.push(((a.ts - t0) / window_ms, a, b));
        }
    }

    Ok(moving
        .chunk_by(|x, y| y.0 == x.0 + 1)
        .map(|run| {
            let (a, b) = (run[0].1, run[run.len() - 1].2);
            let displacement_m = haversine_unchecked(a.into(), b.into());
            MovementInterval {
                device_id: a.device_id.clone(),
                start_ts: a.ts,
                end_ts: b.ts,
                displacement_m,
                mean_speed_mps: displacement_m / ((b.ts - a.ts) as f64 / 1000.0),
            }
        })
        .collect())
}

/// GeoJSON FeatureCollection of fixes and co-location centroids
/// (coordinates are `[lon, lat]`).
pub fn to_geojson(fixes_by_subject: &BTreeMap<String, Vec<GpsFix>>, events: &[ColocationEvent]) -> String {
    let mut features = Vec::new();
    for fixes in fixes_by_subject.values() {
        for f in fixes {
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [f.lon_deg, f.lat_deg]},
                "properties": {
                    "kind": "fix",
                    "device_id": f.device_id,
                    "ts": f.ts,
                    "accuracy_m": f.accuracy_m,
                },
            }));
        }
    }
    for e in events {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [e.centroid.lon_deg, e.centroid.lat_deg]},
            "properties": {
                "kind": "colocation",
                "subject_ids": e.subject_ids,
                "start_ts": e.start_ts,
                "end_ts": e.end_ts,
                "max_spread_m": e.max_spread_m,
            },
        }));
    }
    let fc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_string(&fc).expect("geojson serializes") + "\n"
}

pub const MOVEMENT_CSV_HEADER: &str = "device_id,start_ts,end_ts,displacement_m,mean_speed_mps";

pub fn movement_csv(intervals: &[MovementInterval]) -> String {
    let mut out = String::from(MOVEMENT_CSV_HEADER);
    out.push('\n');
    for m in intervals {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.4}",
            m.device_id, m.start_ts, m.end_ts, m.displacement_m, m.mean_speed_mps
        );
    }
    out
}
