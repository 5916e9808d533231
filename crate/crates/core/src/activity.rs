//! Social activity segmentation from fused heart rate and movement.
//!
//! Three cues separate the activities of a group: whether heart rate is
//! raised at all (rest vs. active), whether subjects react alike (a shared
//! walk) or each in their own way (a card game), and whether most of the
//! group is physically moving.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::MovementInterval;
use crate::hrv::NormalizedHrSeries;
use crate::record::{TimeInterval, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum ActivityError {
    #[error("subject {0:?} has no heart rate samples in the window")]
    MissingSubjectCoverage(String),
    #[error("need at least two subjects, got {0}")]
    FewerThanTwoSubjects(usize),
    #[error("insufficient common coverage: {0}")]
    InsufficientCoverage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityLabel {
    Physical,
    Cognitive,
    Rest,
}

impl ActivityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Physical => "physical",
            ActivityLabel::Cognitive => "cognitive",
            ActivityLabel::Rest => "rest",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ActivityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "physical" => Ok(ActivityLabel::Physical),
            "cognitive" => Ok(ActivityLabel::Cognitive),
            "rest" => Ok(ActivityLabel::Rest),
            other => Err(format!("unknown activity label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySegment {
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub label: ActivityLabel,
    /// Mean of the slice group elevations.
    pub group_elevation_bpm: f64,
    /// Mean of the slice dispersions.
    pub dispersion_bpm: f64,
    /// True if any slice had a moving majority.
    pub moving: bool,
    pub subject_ids: BTreeSet<String>,
}

/// Thresholds of the rule table, in bpm of median-normalized heart rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActivityParams {
    /// Below this group elevation the slice is rest.
    pub e_rest_bpm: f64,
    /// At or above this group elevation the slice is active.
    pub e_act_bpm: f64,
    /// Dispersion above which an active slice is cognitive.
    pub d_split_bpm: f64,
    pub slice_s: u32,
}

impl Default for ActivityParams {
    fn default() -> Self {
        ActivityParams { e_rest_bpm: 1.5, e_act_bpm: 3.0, d_split_bpm: 1.0, slice_s: 60 }
    }
}

fn subject_means(
    series: &BTreeMap<String, NormalizedHrSeries>,
    window: &TimeInterval,
) -> Result<Vec<f64>, ActivityError> {
    series
        .iter()
        .map(|(id, s)| {
            let samples = s.samples_in(window);
            if samples.is_empty() {
                return Err(ActivityError::MissingSubjectCoverage(id.clone()));
            }
            Ok(samples.iter().map(|x| x.hr_minus_median).sum::<f64>() / samples.len() as f64)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Mean over subjects of each subject's mean normalized heart rate.
pub fn group_elevation(
    series: &BTreeMap<String, NormalizedHrSeries>,
    window: &TimeInterval,
) -> Result<f64, ActivityError> {
    if series.is_empty() {
        return Err(ActivityError::InsufficientCoverage("no subjects".into()));
    }
    Ok(mean(&subject_means(series, window)?))
}

/// Sample standard deviation across subjects of their mean normalized heart
/// rate in the window.
pub fn inter_subject_dispersion(
    series: &BTreeMap<String, NormalizedHrSeries>,
    window: &TimeInterval,
) -> Result<f64, ActivityError> {
    if series.len() < 2 {
        return Err(ActivityError::FewerThanTwoSubjects(series.len()));
    }
    Ok(sample_std(&subject_means(series, window)?))
}

/// Per-slice evidence and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceLabel {
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub group_elevation_bpm: f64,
    pub dispersion_bpm: f64,
    pub moving: bool,
    pub label: ActivityLabel,
}

/// Rule table. `None` means the evidence is inconclusive and the previous
/// label should carry over.
pub fn rule_label(elevation: f64, dispersion: f64, moving: bool, p: &ActivityParams) -> Option<ActivityLabel> {
    if elevation < p.e_rest_bpm {
        Some(ActivityLabel::Rest)
    } else if elevation >= p.e_act_bpm {
        if dispersion <= p.d_split_bpm || moving {
            Some(ActivityLabel::Physical)
        } else {
            Some(ActivityLabel::Cognitive)
        }
    } else {
        None
    }
}

/// Labels every slice of the common coverage of all series.
pub fn classify_slices(
    series: &BTreeMap<String, NormalizedHrSeries>,
    movement: &[MovementInterval],
    params: &ActivityParams,
) -> Result<Vec<SliceLabel>, ActivityError> {
    if series.len() < 2 {
        return Err(ActivityError::FewerThanTwoSubjects(series.len()));
    }
    let mut start = Timestamp::MIN;
    let mut end = Timestamp::MAX;
    for (id, s) in series {
        let cov = s
            .covered()
            .ok_or_else(|| ActivityError::MissingSubjectCoverage(id.clone()))?;
        start = start.max(cov.start);
        end = end.min(cov.end);
    }
    let slice_ms = params.slice_s.max(1) as i64 * 1000;
    let n_slices = if end > start { (end - start) / slice_ms } else { 0 };
    if n_slices < 2 {
        return Err(ActivityError::InsufficientCoverage(format!(
            "{} ms of common coverage, need two {} s slices",
            (end - start).max(0),
            params.slice_s
        )));
    }

    let mut out: Vec<SliceLabel> = Vec::with_capacity(n_slices as usize);
    for k in 0..n_slices {
        let window = TimeInterval::new(start.add_ms(k * slice_ms), start.add_ms((k + 1) * slice_ms));
        let means = subject_means(series, &window)?;
        let elevation = mean(&means);
        let dispersion = sample_std(&means);
        let movers = series
            .keys()
            .filter(|id| {
                movement
                    .iter()
                    .any(|m| &m.device_id == *id && window.overlaps(&TimeInterval::new(m.start_ts, m.end_ts.add_ms(1))))
            })
            .count();
        let moving = 2 * movers > series.len();
        let label = rule_label(elevation, dispersion, moving, params)
            .or_else(|| out.last().map(|s| s.label))
            .unwrap_or(ActivityLabel::Rest);
        out.push(SliceLabel {
            start_ts: window.start,
            end_ts: window.end,
            group_elevation_bpm: elevation,
            dispersion_bpm: dispersion,
            moving,
            label,
        });
    }
    Ok(out)
}

/// Slices merged into segments of constant label. The segments tile the
/// analyzed interval.
pub fn classify_segments(
    series: &BTreeMap<String, NormalizedHrSeries>,
    movement: &[MovementInterval],
    params: &ActivityParams,
) -> Result<Vec<ActivitySegment>, ActivityError> {
    let slices = classify_slices(series, movement, params)?;
    let subject_ids: BTreeSet<String> = series.keys().cloned().collect();
    Ok(slices
        .chunk_by(|a, b| a.label == b.label)
        .map(|run| {
            let n = run.len() as f64;
            ActivitySegment {
                start_ts: run[0].start_ts,
                end_ts: run[run.len() - 1].end_ts,
                label: run[0].label,
                group_elevation_bpm: run.iter().map(|s| s.group_elevation_bpm).sum::<f64>() / n,
                dispersion_bpm: run.iter().map(|s| s.dispersion_bpm).sum::<f64>() / n,
                moving: run.iter().any(|s| s.moving),
                subject_ids: subject_ids.clone(),
            }
        })
        .collect())
}

pub const SEGMENTS_CSV_HEADER: &str = "start,end,label,group_elevation_bpm,dispersion_bpm,moving";

pub fn segments_csv(segments: &[ActivitySegment]) -> String {
    let mut out = String::from(SEGMENTS_CSV_HEADER);
    out.push('\n');
    for s in segments {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.3},{}",
            s.start_ts, s.end_ts, s.label, s.group_elevation_bpm, s.dispersion_bpm, s.moving
        );
    }
    out
}
