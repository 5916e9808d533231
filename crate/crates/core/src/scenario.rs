//! Synthetic multi-subject scenarios with ground truth.
//!
//! A scenario is a list of phases shared by every subject. Each phase has a
//! heart rate profile and a motion profile. Generation is a pure function of
//! the `ScenarioSpec`: every subject and every purpose (beats, positions, clock) draws
//! from its own ChaCha stream keyed by the seed.
//!
//! Heart rate magnitudes are plausibility choices, not measured values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::ActivityLabel;
use crate::geo::LatLon;
use crate::ingest::{stream_file_name, write_jsonl, GpsFix, RrSample, GPS_ACCURACY_MAX_M};
use crate::record::{RecordKind, TimeInterval, Timestamp};
use crate::timesync::{render_clock_config, ClockModel};

/// Common-clock time of the first instant of every scenario.
pub const SCENARIO_EPOCH_MS: i64 = 1_600_000_000_000;
pub const BASELINE_RR_MS: f64 = 850.0;
pub const BEAT_NOISE_SD_MS: f64 = 30.0;
pub const GPS_PERIOD_MS: i64 = 2000;
pub const OFFICE: LatLon = LatLon::new(45.7820, 4.8660);

pub const PRESETS: [&str; 3] = ["lunch", "colocation", "stairs"];

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const CLOCKS_FILE: &str = "clocks.json";
pub const SCENARIO_FILE: &str = "scenario.json";

// true offsets stay this far inside the 2000 ms bound so that exchange
// estimation error cannot push a model out of it
const MAX_TRUE_OFFSET_MS: i64 = 1900;
const RR_DROP_PROB: f64 = 0.001;
const SHIFT_TAU_S: f64 = 20.0;
const BOOST_RISE_TAU_S: f64 = 30.0;
const BOOST_DECAY_TAU_S: f64 = 90.0;
const OUTDOOR_ACC_M: (f64, f64) = (4.0, 50.0);
const INDOOR_ACC_M: (f64, f64) = (50.0, 1200.0);
const PRE_TRIP_SPREAD_M: f64 = 1.5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("unknown scenario {0:?}; known: lunch, colocation, stairs")]
    UnknownPreset(String),
    #[error("scenario i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum HrProfile {
    Baseline,
    /// Everyone shifted by about `shift_bpm`, plus `walk_boost_bpm` while
    /// walking. Beat-to-beat variability is multiplied by `variability_scale`.
    Exertion { shift_bpm: f64, walk_boost_bpm: f64, variability_scale: f64 },
    /// A random 1 to `max_stressed` subjects shifted within `stressed_bpm`,
    /// the others within `others_bpm`.
    Stress { stressed_bpm: (f64, f64), others_bpm: (f64, f64), max_stressed: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MotionProfile {
    /// Indoors at the office, subjects seated on a circle of radius `spread_m`.
    Office { spread_m: f64 },
    /// Leave the office at `depart_s`, walk to `site`, stay, walk back.
    RoundTrip { site: String, distance_m: f64, bearing_deg: f64, depart_s: f64, stay_s: f64, speed_mps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub label: ActivityLabel,
    pub duration_s: u32,
    pub hr_profile: HrProfile,
    pub motion_profile: MotionProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub subjects: usize,
    pub phases: Vec<PhaseSpec>,
    pub seed: u64,
}

fn lunch_trip() -> MotionProfile {
    MotionProfile::RoundTrip {
        site: "restaurant".into(),
        distance_m: 200.0,
        bearing_deg: 225.0,
        depart_s: 240.0,
        stay_s: 660.0,
        speed_mps: 1.4,
    }
}

impl ScenarioSpec {
    /// Walk to lunch and back, a card game, then desk work.
    pub fn lunch(seed: u64) -> Self {
        ScenarioSpec {
            name: "lunch".into(),
            subjects: 4,
            seed,
            phases: vec![
                PhaseSpec {
                    label: ActivityLabel::Physical,
                    duration_s: 1200,
                    hr_profile: HrProfile::Exertion { shift_bpm: 10.0, walk_boost_bpm: 8.0, variability_scale: 0.7 },
                    motion_profile: lunch_trip(),
                },
                PhaseSpec {
                    label: ActivityLabel::Cognitive,
                    duration_s: 1500,
                    hr_profile: HrProfile::Stress { stressed_bpm: (8.0, 12.0), others_bpm: (2.0, 4.0), max_stressed: 2 },
                    motion_profile: MotionProfile::Office { spread_m: 1.0 },
                },
                PhaseSpec {
                    label: ActivityLabel::Rest,
                    duration_s: 3600,
                    hr_profile: HrProfile::Baseline,
                    motion_profile: MotionProfile::Office { spread_m: 10.0 },
                },
            ],
        }
    }

    /// The lunch trip alone, followed by a short rest.
    pub fn colocation(seed: u64) -> Self {
        let mut spec = Self::lunch(seed);
        spec.name = "colocation".into();
        spec.phases.remove(1);
        spec.phases[1].duration_s = 900;
        spec
    }

    /// One subject walks to another building and climbs the stairs.
    pub fn stairs(seed: u64) -> Self {
        ScenarioSpec {
            name: "stairs".into(),
            subjects: 1,
            seed,
            phases: vec![
                PhaseSpec {
                    label: ActivityLabel::Rest,
                    duration_s: 900,
                    hr_profile: HrProfile::Baseline,
                    motion_profile: MotionProfile::Office { spread_m: 0.0 },
                },
                PhaseSpec {
                    label: ActivityLabel::Physical,
                    duration_s: 900,
                    hr_profile: HrProfile::Exertion { shift_bpm: 18.0, walk_boost_bpm: 10.0, variability_scale: 0.5 },
                    motion_profile: MotionProfile::RoundTrip {
                        site: "building_b".into(),
                        distance_m: 300.0,
                        bearing_deg: 90.0,
                        depart_s: 60.0,
                        stay_s: 300.0,
                        speed_mps: 1.4,
                    },
                },
                PhaseSpec {
                    label: ActivityLabel::Rest,
                    duration_s: 900,
                    hr_profile: HrProfile::Baseline,
                    motion_profile: MotionProfile::Office { spread_m: 0.0 },
                },
            ],
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self, ScenarioError> {
        match name {
            "lunch" => Ok(Self::lunch(seed)),
            "colocation" => Ok(Self::colocation(seed)),
            "stairs" => Ok(Self::stairs(seed)),
            other => Err(ScenarioError::UnknownPreset(other.to_string())),
        }
    }

    pub fn duration_ms(&self) -> i64 {
        self.phases.iter().map(|p| p.duration_s as i64 * 1000).sum()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        (1..=self.subjects).map(|i| format!("subject{i}")).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidSpec(m));
        if self.subjects == 0 {
            return bad("at least one subject is required".into());
        }
        if self.phases.is_empty() {
            return bad("at least one phase is required".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.duration_s == 0 {
                return bad(format!("phase {i} has zero duration"));
            }
            match &p.hr_profile {
                HrProfile::Baseline => {}
                HrProfile::Exertion { shift_bpm, walk_boost_bpm, variability_scale } => {
                    if !(shift_bpm.is_finite() && walk_boost_bpm.is_finite() && *variability_scale >= 0.0) {
                        return bad(format!("phase {i}: invalid exertion profile"));
                    }
                }
                HrProfile::Stress { stressed_bpm, others_bpm, max_stressed } => {
                    if *max_stressed == 0 || stressed_bpm.0 > stressed_bpm.1 || others_bpm.0 > others_bpm.1 {
                        return bad(format!("phase {i}: invalid stress profile"));
                    }
                }
            }
            match &p.motion_profile {
                MotionProfile::Office { spread_m } => {
                    if !(*spread_m >= 0.0) {
                        return bad(format!("phase {i}: negative spread"));
                    }
                }
                MotionProfile::RoundTrip { distance_m, depart_s, stay_s, speed_mps, .. } => {
                    if !(*distance_m > 0.0 && *speed_mps > 0.0 && *depart_s >= 0.0 && *stay_s >= 0.0) {
                        return bad(format!("phase {i}: invalid trip"));
                    }
                    let end = depart_s + 2.0 * distance_m / speed_mps + stay_s;
                    if end > p.duration_s as f64 {
                        return bad(format!("phase {i}: trip ends at {end:.0} s, after the phase"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SimulatedData, ScenarioError> {
        self.validate()?;
        generate(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPhase {
    pub label: ActivityLabel,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStay {
    pub site: String,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStress {
    pub phase: usize,
    pub stressed: Vec<String>,
    pub shift_bpm: BTreeMap<String, f64>,
}

/// What actually happened, on the common clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub phases: Vec<TruthPhase>,
    /// Walks, shared by all subjects.
    pub walks: Vec<TimeInterval>,
    pub stays: Vec<TruthStay>,
    pub clock_offsets_ms: BTreeMap<String, i64>,
    pub stress: Vec<TruthStress>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ScenarioError::Io(e.to_string()))
    }

    /// Start times of every phase after the first.
    pub fn boundaries(&self) -> Vec<Timestamp> {
        self.phases.iter().skip(1).map(|p| p.start_ts).collect()
    }

    pub fn labels(&self) -> Vec<ActivityLabel> {
        self.phases.iter().map(|p| p.label).collect()
    }
}

/// Device streams of a generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub spec: ScenarioSpec,
    /// Reception-stamped samples on each device clock.
    pub rr: BTreeMap<String, Vec<RrSample>>,
    /// Fixes stamped on each device clock.
    pub gps: BTreeMap<String, Vec<GpsFix>>,
    /// Offsets as estimated by a two-way exchange at the start.
    pub clocks: BTreeMap<String, ClockModel>,
    pub truth: GroundTruth,
}

impl SimulatedData {
    /// Writes `<device>.rr.jsonl`, `<device>.gps.jsonl`, `clocks.json`,
    /// `ground_truth.json` and `scenario.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ScenarioError> {
        fs::create_dir_all(dir)?;
        let io = |e: crate::ingest::IngestError| ScenarioError::Io(e.to_string());
        for (dev, samples) in &self.rr {
            let f = fs::File::create(dir.join(stream_file_name(dev, RecordKind::Rr)))?;
            write_jsonl(std::io::BufWriter::new(f), samples).map_err(io)?;
        }
        for (dev, fixes) in &self.gps {
            let f = fs::File::create(dir.join(stream_file_name(dev, RecordKind::Gps)))?;
            write_jsonl(std::io::BufWriter::new(f), fixes).map_err(io)?;
        }
        fs::write(dir.join(CLOCKS_FILE), render_clock_config(&self.clocks))?;
        fs::write(dir.join(GROUND_TRUTH_FILE), pretty(&self.truth))?;
        fs::write(dir.join(SCENARIO_FILE), pretty(&self.spec))?;
        Ok(())
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("scenario data serializes") + "\n"
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const SCENARIO_STREAM: u64 = 0;
fn subject_stream(seed: u64, subject: usize, purpose: u64) -> ChaCha8Rng {
    stream(seed, 1 + subject as u64 * 8 + purpose)
}
const PURPOSE_BEATS: u64 = 0;
const PURPOSE_GPS: u64 = 1;
const PURPOSE_CLOCK: u64 = 2;

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Where a subject is over a span of scenario time (ms from the start).
#[derive(Debug, Clone)]
enum Leg {
    Indoor { site: String, pos: LatLon },
    Walk { from: LatLon, bearing_deg: f64, distance_m: f64 },
}

#[derive(Debug, Clone)]
struct TimedLeg {
    start_ms: i64,
    end_ms: i64,
    leg: Leg,
}

fn seat(spread_m: f64, subject: usize, n: usize) -> LatLon {
    let a = 2.0 * std::f64::consts::PI * subject as f64 / n as f64;
    OFFICE.offset_m(spread_m * a.cos(), spread_m * a.sin())
}

fn legs_for(spec: &ScenarioSpec, subject: usize) -> Vec<TimedLeg> {
    let n = spec.subjects;
    let mut legs = Vec::new();
    let mut t0 = 0i64;
    for phase in &spec.phases {
        let t1 = t0 + phase.duration_s as i64 * 1000;
        match &phase.motion_profile {
            MotionProfile::Office { spread_m } => legs.push(TimedLeg {
                start_ms: t0,
                end_ms: t1,
                leg: Leg::Indoor { site: "office".into(), pos: seat(*spread_m, subject, n) },
            }),
            MotionProfile::RoundTrip { site, distance_m, bearing_deg, depart_s, stay_s, speed_mps } => {
                let walk_ms = (distance_m / speed_mps * 1000.0).round() as i64;
                let depart = t0 + (depart_s * 1000.0).round() as i64;
                let arrive = depart + walk_ms;
                let leave = arrive + (stay_s * 1000.0).round() as i64;
                let back = leave + walk_ms;
                let dest = OFFICE.destination(*bearing_deg, *distance_m);
                let table = seat(PRE_TRIP_SPREAD_M, subject, n);
                let office = || Leg::Indoor { site: "office".into(), pos: table };
                legs.push(TimedLeg { start_ms: t0, end_ms: depart, leg: office() });
                legs.push(TimedLeg {
                    start_ms: depart,
                    end_ms: arrive,
                    leg: Leg::Walk { from: OFFICE, bearing_deg: *bearing_deg, distance_m: *distance_m },
                });
                legs.push(TimedLeg {
                    start_ms: arrive,
                    end_ms: leave,
                    leg: Leg::Indoor { site: site.clone(), pos: dest },
                });
                legs.push(TimedLeg {
                    start_ms: leave,
                    end_ms: back,
                    leg: Leg::Walk { from: dest, bearing_deg: (bearing_deg + 180.0) % 360.0, distance_m: *distance_m },
                });
                legs.push(TimedLeg { start_ms: back, end_ms: t1, leg: office() });
            }
        }
        t0 = t1;
    }
    legs.retain(|l| l.end_ms > l.start_ms);
    legs
}

fn true_position(leg: &TimedLeg, t_ms: i64) -> (LatLon, bool) {
    match &leg.leg {
        Leg::Indoor { pos, .. } => (*pos, true),
        Leg::Walk { from, bearing_deg, distance_m } => {
            let frac = (t_ms - leg.start_ms) as f64 / (leg.end_ms - leg.start_ms) as f64;
            (from.destination(*bearing_deg, distance_m * frac.clamp(0.0, 1.0)), false)
        }
    }
}

/// Per-subject heart rate shift targets, in bpm above baseline.
struct HrPlan {
    /// (phase end ms, shift bpm, walk boost bpm, variability scale)
    phases: Vec<(i64, f64, f64, f64)>,
}

impl HrPlan {
    fn at(&self, t_ms: i64) -> (f64, f64, f64) {
        let p = self
            .phases
            .iter()
            .find(|p| t_ms < p.0)
            .or(self.phases.last())
            .expect("at least one phase");
        (p.1, p.2, p.3)
    }
}

fn generate(spec: &ScenarioSpec) -> Result<SimulatedData, ScenarioError> {
    let ids = spec.subject_ids();
    let n = spec.subjects;
    let total_ms = spec.duration_ms();
    let mut srng = stream(spec.seed, SCENARIO_STREAM);

    // scenario-level draws: stress assignment and exertion response
    let mut plans: Vec<HrPlan> = (0..n).map(|_| HrPlan { phases: Vec::new() }).collect();
    let mut stress = Vec::new();
    let mut phase_end = 0i64;
    for (pi, phase) in spec.phases.iter().enumerate() {
        phase_end += phase.duration_s as i64 * 1000;
        match &phase.hr_profile {
            HrProfile::Baseline => {
                for plan in &mut plans {
                    plan.phases.push((phase_end, 0.0, 0.0, 1.0));
                }
            }
            HrProfile::Exertion { shift_bpm, walk_boost_bpm, variability_scale } => {
                for plan in &mut plans {
                    let response = srng.random_range(0.97..=1.03);
                    plan.phases.push((phase_end, shift_bpm * response, walk_boost_bpm * response, *variability_scale));
                }
            }
            HrProfile::Stress { stressed_bpm, others_bpm, max_stressed } => {
                let k = srng.random_range(1..=(*max_stressed).min(n));
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut srng);
                let mut chosen: Vec<usize> = order[..k].to_vec();
                chosen.sort_unstable();
                let mut shifts = BTreeMap::new();
                for (i, plan) in plans.iter_mut().enumerate() {
                    let range = if chosen.contains(&i) { stressed_bpm } else { others_bpm };
                    let s = srng.random_range(range.0..=range.1);
                    shifts.insert(ids[i].clone(), s);
                    plan.phases.push((phase_end, s, 0.0, 1.0));
                }
                stress.push(TruthStress {
                    phase: pi,
                    stressed: chosen.iter().map(|&i| ids[i].clone()).collect(),
                    shift_bpm: shifts,
                });
            }
        }
    }

    let mut rr = BTreeMap::new();
    let mut gps = BTreeMap::new();
    let mut clocks = BTreeMap::new();
    let mut offsets = BTreeMap::new();
    let epoch = Timestamp(SCENARIO_EPOCH_MS);

    let mut legs0 = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let mut crng = subject_stream(spec.seed, i, PURPOSE_CLOCK);
        let offset = crng.random_range(-MAX_TRUE_OFFSET_MS..=MAX_TRUE_OFFSET_MS);
        offsets.insert(id.clone(), offset);
        clocks.insert(id.clone(), estimate_clock(id, offset, &mut crng));

        let legs = legs_for(spec, i);
        rr.insert(id.clone(), beats_for(id, offset, total_ms, &plans[i], &legs, spec.seed, i));
        gps.insert(id.clone(), fixes_for(id, offset, total_ms, &legs, spec.seed, i));
        if i == 0 {
            legs0 = legs;
        }
    }

    let mut walks = Vec::new();
    let mut stays: Vec<TruthStay> = Vec::new();
    for l in &legs0 {
        let iv = TimeInterval::new(epoch.add_ms(l.start_ms), epoch.add_ms(l.end_ms));
        match &l.leg {
            Leg::Walk { .. } => walks.push(iv),
            Leg::Indoor { site, .. } => match stays.last_mut() {
                Some(last) if last.site == *site && last.end_ts == iv.start => last.end_ts = iv.end,
                _ => stays.push(TruthStay { site: site.clone(), start_ts: iv.start, end_ts: iv.end }),
            },
        }
    }

    let mut phases = Vec::new();
    let mut t = 0i64;
    for p in &spec.phases {
        let end = t + p.duration_s as i64 * 1000;
        phases.push(TruthPhase { label: p.label, start_ts: epoch.add_ms(t), end_ts: epoch.add_ms(end) });
        t = end;
    }

    let truth = GroundTruth {
        scenario: spec.name.clone(),
        seed: spec.seed,
        start_ts: epoch,
        end_ts: epoch.add_ms(total_ms),
        phases,
        walks,
        stays,
        clock_offsets_ms: offsets,
        stress,
    };
    Ok(SimulatedData { spec: spec.clone(), rr, gps, clocks, truth })
}

/// Best of eight device-initiated exchanges, by round-trip time.
fn estimate_clock(id: &str, offset: i64, rng: &mut ChaCha8Rng) -> ClockModel {
    let mut best: Option<(i64, ClockModel)> = None;
    for k in 0..8 {
        let t0 = Timestamp(SCENARIO_EPOCH_MS + offset - 10_000 + k * 1000);
        let up = rng.random_range(5..=80);
        let hold = rng.random_range(1..=3);
        let down = rng.random_range(5..=80);
        let t1 = t0.add_ms(-offset + up);
        let t2 = t1.add_ms(hold);
        let t3 = t2.add_ms(down + offset);
        let model = ClockModel::from_exchange(id, [t0, t1, t2, t3]).expect("exchange is monotonic");
        let rtt = (t3 - t0) - (t2 - t1);
        if best.as_ref().is_none_or(|(b, _)| rtt < *b) {
            best = Some((rtt, model));
        }
    }
    best.expect("eight exchanges").1
}

fn beats_for(id: &str, offset: i64, total_ms: i64, plan: &HrPlan, legs: &[TimedLeg], seed: u64, subject: usize) -> Vec<RrSample> {
    let mut rng = subject_stream(seed, subject, PURPOSE_BEATS);
    let noise = Normal::new(0.0, BEAT_NOISE_SD_MS).expect("valid sd");
    let hr0 = 60_000.0 / BASELINE_RR_MS;
    let lf_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let hf_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let walking = |t: i64| {
        legs.iter()
            .any(|l| matches!(l.leg, Leg::Walk { .. }) && l.start_ms <= t && t < l.end_ms)
    };

    let (s0, _, _) = plan.at(0);
    let mut shift = s0;
    let mut boost = 0.0;
    let mut t = rng.random_range(0..1000i64);
    let mut seq = 0u64;
    let mut out = Vec::with_capacity((total_ms / 700) as usize);
    loop {
        let (target, walk_boost, scale) = plan.at(t);
        let ts = t as f64 / 1000.0;
        let mean_rr = 60_000.0 / (hr0 + shift + boost);
        let rsa = 15.0 * (std::f64::consts::TAU * 0.1 * ts + lf_phase).sin()
            + 20.0 * (std::f64::consts::TAU * 0.25 * ts + hf_phase).sin();
        let rr = (mean_rr + scale * (rsa + noise.sample(&mut rng))).round().clamp(300.0, 2000.0) as i64;
        t += rr;
        if t >= total_ms {
            break;
        }
        let dt = rr as f64 / 1000.0;
        shift += (target - shift) * (1.0 - (-dt / SHIFT_TAU_S).exp());
        let boost_target = if walking(t) { walk_boost } else { 0.0 };
        let tau = if boost_target > boost { BOOST_RISE_TAU_S } else { BOOST_DECAY_TAU_S };
        boost += (boost_target - boost) * (1.0 - (-dt / tau).exp());

        let latency = rng.random_range(10..=60i64);
        let dropped = rng.random_bool(RR_DROP_PROB);
        if !dropped {
            out.push(RrSample {
                device_id: id.to_string(),
                seq,
                rr_ms: rr as u32,
                reception_ts: Timestamp(SCENARIO_EPOCH_MS + t + latency + offset),
            });
        }
        seq += 1;
    }
    out
}

fn fixes_for(id: &str, offset: i64, total_ms: i64, legs: &[TimedLeg], seed: u64, subject: usize) -> Vec<GpsFix> {
    let mut rng = subject_stream(seed, subject, PURPOSE_GPS);
    let std_normal = Normal::new(0.0, 1.0).expect("valid sd");
    // first fix on a whole device-clock second
    let first_dev = (SCENARIO_EPOCH_MS + offset).div_euclid(1000) * 1000 + 1000;
    let mut out = Vec::new();
    // sticky indoor error: (site, level, bias east, bias north)
    let mut stay: Option<(String, f64, f64, f64)> = None;
    let mut k = 0i64;
    loop {
        let dev_ts = first_dev + k * GPS_PERIOD_MS;
        let t = dev_ts - offset - SCENARIO_EPOCH_MS;
        if t >= total_ms {
            break;
        }
        k += 1;
        let Some(leg) = legs.iter().find(|l| l.start_ms <= t && t < l.end_ms) else {
            continue;
        };
        let (pos, indoor) = true_position(leg, t);
        let (fix, acc) = if indoor {
            let site = match &leg.leg {
                Leg::Indoor { site, .. } => site.clone(),
                Leg::Walk { .. } => unreachable!(),
            };
            if stay.as_ref().is_none_or(|s| s.0 != site) {
                let level = log_uniform(&mut rng, INDOOR_ACC_M);
                let r = 0.3 * level * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                stay = Some((site, level, r * a.cos(), r * a.sin()));
            }
            let (_, level, be, bn) = stay.clone().expect("stay set");
            let acc = (level * rng.random_range(0.9..=1.1)).clamp(INDOOR_ACC_M.0, GPS_ACCURACY_MAX_M);
            let je = 0.02 * level * std_normal.sample(&mut rng);
            let jn = 0.02 * level * std_normal.sample(&mut rng);
            (pos.offset_m(be + je, bn + jn), acc)
        } else {
            stay = None;
            let acc = log_uniform(&mut rng, OUTDOOR_ACC_M);
            let e = acc / 3.0 * std_normal.sample(&mut rng);
            let nn = acc / 3.0 * std_normal.sample(&mut rng);
            (pos.offset_m(e, nn), acc)
        };
        out.push(GpsFix {
            device_id: id.to_string(),
            ts: Timestamp(dev_ts),
            lat_deg: fix.lat_deg,
            lon_deg: fix.lon_deg,
            accuracy_m: acc,
        });
    }
    out
}
