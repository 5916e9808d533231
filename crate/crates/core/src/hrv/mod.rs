//! Heart rate and short-term heart rate variability.
//!
//! Time-domain parameters (SDNN, RMSSD), spectral band powers of the R-R
//! tachogram (LF 0.04-0.15 Hz, HF 0.15-0.4 Hz), 5-minute windowing and the
//! median-normalized heart rate series used to compare subjects.

pub mod psd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::ReconstructedBeat;
use crate::record::{TimeInterval, Timestamp};

pub use psd::{Psd, PsdConfig};

#[derive(Debug, Error, PartialEq)]
pub enum HrvError {
    #[error("need at least {needed} intervals, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("record too short: {0}")]
    TooShortRecord(String),
    #[error("band powers must be non-negative and finite")]
    NegativePower,
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("beats are not sorted by time")]
    UnsortedInput,
    #[error("sliding hop must be positive, got {0}")]
    InvalidHop(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrvConfig {
    pub window_s: u32,
    pub min_beats: usize,
    pub normalized_cadence_s: u32,
    pub psd: PsdConfig,
}

impl Default for HrvConfig {
    fn default() -> Self {
        HrvConfig { window_s: 300, min_beats: 30, normalized_cadence_s: 10, psd: PsdConfig::default() }
    }
}

/// HRV parameters of one window of one subject. Parameters are `None` when
/// the window has too few beats or the quantity is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrvWindow {
    pub device_id: String,
    pub window_start: Timestamp,
    pub window_end: Timestamp,
    pub n_beats: usize,
    pub mean_hr_bpm: Option<f64>,
    pub sdnn_ms: Option<f64>,
    pub rmssd_ms: Option<f64>,
    pub lf_power: Option<f64>,
    pub hf_power: Option<f64>,
    pub lf_hf: Option<f64>,
    pub lf_norm_pct: Option<f64>,
}

impl HrvWindow {
    pub fn validate(&self) -> Result<(), String> {
        if self.device_id.is_empty() {
            return Err("empty device_id".into());
        }
        if self.window_end <= self.window_start {
            return Err("window_end must be after window_start".into());
        }
        let fields = [
            self.mean_hr_bpm,
            self.sdnn_ms,
            self.rmssd_ms,
            self.lf_power,
            self.hf_power,
            self.lf_hf,
            self.lf_norm_pct,
        ];
        if fields.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("HRV parameters must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn interval(&self) -> TimeInterval {
        TimeInterval::new(self.window_start, self.window_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrSample {
    pub ts: Timestamp,
    pub hr_minus_median: f64,
}

/// Windowed heart rate with the subject's median removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedHrSeries {
    pub device_id: String,
    pub samples: Vec<HrSample>,
    pub window_s: u32,
    pub median_bpm: f64,
}

impl NormalizedHrSeries {
    pub fn covered(&self) -> Option<TimeInterval> {
        let first = self.samples.first()?.ts;
        let last = self.samples.last()?.ts;
        Some(TimeInterval::new(first, last.add_ms(1)))
    }

    pub fn samples_in(&self, window: &TimeInterval) -> &[HrSample] {
        let lo = self.samples.partition_point(|s| s.ts < window.start);
        let hi = self.samples.partition_point(|s| s.ts < window.end);
        &self.samples[lo..hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPowers {
    pub lf: f64,
    pub hf: f64,
}

/// Sample standard deviation (N-1) of the intervals.
pub fn sdnn(rr: &[f64]) -> Result<f64, HrvError> {
    if rr.len() < 2 {
        return Err(HrvError::TooFewSamples { needed: 2, got: rr.len() });
    }
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let ss: f64 = rr.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / (n - 1.0)).sqrt())
}

/// Root mean square of successive differences.
pub fn rmssd(rr: &[f64]) -> Result<f64, HrvError> {
    if rr.len() < 2 {
        return Err(HrvError::TooFewSamples { needed: 2, got: rr.len() });
    }
    let ss: f64 = rr.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Ok((ss / (rr.len() - 1) as f64).sqrt())
}

pub fn mean_hr(rr: &[f64]) -> Result<f64, HrvError> {
    if rr.is_empty() {
        return Err(HrvError::EmptyInput);
    }
    Ok(60_000.0 / (rr.iter().sum::<f64>() / rr.len() as f64))
}

fn check_powers(lf: f64, hf: f64) -> Result<(), HrvError> {
    if lf.is_finite() && hf.is_finite() && lf >= 0.0 && hf >= 0.0 {
        Ok(())
    } else {
        Err(HrvError::NegativePower)
    }
}

pub fn lf_hf_ratio(lf: f64, hf: f64) -> Result<f64, HrvError> {
    check_powers(lf, hf)?;
    if hf == 0.0 {
        return Err(HrvError::ZeroDenominator);
    }
    Ok(lf / hf)
}

/// LF as a percentage of LF + HF.
pub fn lf_norm(lf: f64, hf: f64) -> Result<f64, HrvError> {
    check_powers(lf, hf)?;
    if lf + hf == 0.0 {
        return Err(HrvError::ZeroDenominator);
    }
    Ok(100.0 * lf / (lf + hf))
}

/// The mean-removed tachogram resampled at `cfg.resample_hz`.
pub fn resampled_tachogram(beats: &[ReconstructedBeat], cfg: &PsdConfig) -> Result<Vec<f64>, HrvError> {
    if beats.len() < cfg.min_beats {
        return Err(HrvError::TooShortRecord(format!(
            "{} beats, need {}",
            beats.len(),
            cfg.min_beats
        )));
    }
    let origin = beats[0].beat_ts;
    let span_s = beats[beats.len() - 1].beat_ts.secs_since(origin);
    if span_s < cfg.min_span_s {
        return Err(HrvError::TooShortRecord(format!("span {span_s:.1} s, need {} s", cfg.min_span_s)));
    }
    let times: Vec<f64> = beats.iter().map(|b| b.beat_ts.secs_since(origin)).collect();
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(HrvError::UnsortedInput);
    }
    let values: Vec<f64> = beats.iter().map(|b| b.rr_ms as f64).collect();
    let mut series = psd::resample_linear(&times, &values, cfg.resample_hz);
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series.iter_mut().for_each(|x| *x -= mean);
    Ok(series)
}

/// Welch PSD of the beats' tachogram, in ms²/Hz.
pub fn tachogram_psd(beats: &[ReconstructedBeat], cfg: &PsdConfig) -> Result<Psd, HrvError> {
    let series = resampled_tachogram(beats, cfg)?;
    let seg = (cfg.segment_s * cfg.resample_hz).round() as usize;
    Ok(psd::welch(&series, cfg.resample_hz, seg, cfg.overlap))
}

/// LF and HF band integrals, in ms², with the default spectral settings.
pub fn band_powers(beats: &[ReconstructedBeat]) -> Result<BandPowers, HrvError> {
    band_powers_with(beats, &PsdConfig::default())
}

pub fn band_powers_with(beats: &[ReconstructedBeat], cfg: &PsdConfig) -> Result<BandPowers, HrvError> {
    let psd = tachogram_psd(beats, cfg)?;
    Ok(BandPowers {
        lf: psd.band_power(cfg.lf_band_hz.0, cfg.lf_band_hz.1),
        hf: psd.band_power(cfg.hf_band_hz.0, cfg.hf_band_hz.1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WindowMode {
    /// Back-to-back windows.
    Tumbling,
    /// Windows starting every `hop_s` seconds.
    Sliding { hop_s: f64 },
}

fn check_sorted(beats: &[ReconstructedBeat]) -> Result<(), HrvError> {
    if beats.windows(2).any(|w| w[1].beat_ts < w[0].beat_ts) {
        Err(HrvError::UnsortedInput)
    } else {
        Ok(())
    }
}

/// HRV windows aligned to the first beat. Only complete windows (ending at or
/// before the last beat) are emitted.
pub fn compute_hrv_windows(
    beats: &[ReconstructedBeat],
    mode: WindowMode,
    cfg: &HrvConfig,
) -> Result<Vec<HrvWindow>, HrvError> {
    let window_ms = cfg.window_s as i64 * 1000;
    let hop_ms = match mode {
        WindowMode::Tumbling => window_ms,
        WindowMode::Sliding { hop_s } => {
            if !(hop_s > 0.0) {
                return Err(HrvError::InvalidHop(hop_s));
            }
            ((hop_s * 1000.0).round() as i64).max(1)
        }
    };
    check_sorted(beats)?;
    let (Some(first), Some(last)) = (beats.first(), beats.last()) else {
        return Ok(Vec::new());
    };

    let mut out = Vec::new();
    let mut start = first.beat_ts;
    while start.add_ms(window_ms) <= last.beat_ts {
        let end = start.add_ms(window_ms);
        let lo = beats.partition_point(|b| b.beat_ts < start);
        let hi = beats.partition_point(|b| b.beat_ts < end);
        out.push(window_params(&first.device_id, start, end, &beats[lo..hi], cfg));
        start = start.add_ms(hop_ms);
    }
    Ok(out)
}

fn window_params(
    device_id: &str,
    start: Timestamp,
    end: Timestamp,
    beats: &[ReconstructedBeat],
    cfg: &HrvConfig,
) -> HrvWindow {
    let rr: Vec<f64> = beats.iter().map(|b| b.rr_ms as f64).collect();
    let mut w = HrvWindow {
        device_id: device_id.to_string(),
        window_start: start,
        window_end: end,
        n_beats: beats.len(),
        mean_hr_bpm: mean_hr(&rr).ok(),
        sdnn_ms: None,
        rmssd_ms: None,
        lf_power: None,
        hf_power: None,
        lf_hf: None,
        lf_norm_pct: None,
    };
    if beats.len() < cfg.min_beats {
        return w;
    }
    w.sdnn_ms = sdnn(&rr).ok();
    w.rmssd_ms = rmssd(&rr).ok();
    if let Ok(bp) = band_powers_with(beats, &cfg.psd) {
        w.lf_power = Some(bp.lf);
        w.hf_power = Some(bp.hf);
        w.lf_hf = lf_hf_ratio(bp.lf, bp.hf).ok();
        w.lf_norm_pct = lf_norm(bp.lf, bp.hf).ok();
    }
    w
}

/// Median of a non-empty slice; mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Mean heart rate over a 5-minute window evaluated every
/// `normalized_cadence_s`, minus the median of the resulting series.
///
/// Each sample is stamped at the centre of its window, so the series is not
/// delayed with respect to the beats.
pub fn normalized_hr_series(beats: &[ReconstructedBeat], cfg: &HrvConfig) -> Result<NormalizedHrSeries, HrvError> {
    check_sorted(beats)?;
    let window_ms = cfg.window_s as i64 * 1000;
    let (Some(first), Some(last)) = (beats.first(), beats.last()) else {
        return Err(HrvError::TooShortRecord("no beats".into()));
    };
    if last.beat_ts - first.beat_ts < window_ms {
        return Err(HrvError::TooShortRecord(format!(
            "span {} ms, need {} ms",
            last.beat_ts - first.beat_ts,
            window_ms
        )));
    }

    // prefix sums of rr for O(1) window means
    let mut prefix = Vec::with_capacity(beats.len() + 1);
    prefix.push(0u64);
    for b in beats {
        prefix.push(prefix.last().unwrap() + b.rr_ms as u64);
    }

    let half = window_ms / 2;
    let cadence = cfg.normalized_cadence_s.max(1) as i64 * 1000;
    let mut raw = Vec::new();
    let mut centre = first.beat_ts.add_ms(half);
    while centre.add_ms(window_ms - half) <= last.beat_ts {
        let lo = beats.partition_point(|b| b.beat_ts < centre.add_ms(-half));
        let hi = beats.partition_point(|b| b.beat_ts < centre.add_ms(window_ms - half));
        if hi > lo {
            let mean_rr = (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64;
            raw.push((centre, 60_000.0 / mean_rr));
        }
        centre = centre.add_ms(cadence);
    }

    let hr: Vec<f64> = raw.iter().map(|(_, h)| *h).collect();
    let median_bpm = median(&hr).ok_or_else(|| HrvError::TooShortRecord("no complete window".into()))?;
    Ok(NormalizedHrSeries {
        device_id: first.device_id.clone(),
        samples: raw
            .into_iter()
            .map(|(ts, h)| HrSample { ts, hr_minus_median: h - median_bpm })
            .collect(),
        window_s: cfg.window_s,
        median_bpm,
    })
}

pub const HRV_CSV_HEADER: &str =
    "device_id,window_start,window_end,n_beats,mean_hr_bpm,sdnn_ms,rmssd_ms,lf_hf,lf_norm_pct";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// One row per window; undefined parameters are left empty.
pub fn hrv_csv(windows: &[HrvWindow]) -> String {
    let mut out = String::from(HRV_CSV_HEADER);
    out.push('\n');
    for w in windows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            w.device_id,
            w.window_start,
            w.window_end,
            w.n_beats,
            opt(w.mean_hr_bpm),
            opt(w.sdnn_ms),
            opt(w.rmssd_ms),
            opt(w.lf_hf),
            opt(w.lf_norm_pct)
        ));
    }
    out
}

pub const HR_NORMALIZED_CSV_HEADER: &str = "device_id,ts,hr_minus_median_bpm,median_bpm";

pub fn hr_normalized_csv(series: &[NormalizedHrSeries]) -> String {
    let mut out = String::from(HR_NORMALIZED_CSV_HEADER);
    out.push('\n');
    for s in series {
        for h in &s.samples {
            out.push_str(&format!("{},{},{:.3},{:.3}\n", s.device_id, h.ts, h.hr_minus_median, s.median_bpm));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beats_from_rr(rr: &[u32], t0: i64) -> Vec<ReconstructedBeat> {
        let mut t = t0;
        rr.iter()
            .enumerate()
            .map(|(i, &r)| {
                t += r as i64;
                ReconstructedBeat { device_id: "s1".into(), seq: i as u64, beat_ts: Timestamp(t), rr_ms: r, run: 0 }
            })
            .collect()
    }

    /// Beats at exactly 0, 1, ..., n seconds.
    fn second_beats(n: usize) -> Vec<ReconstructedBeat> {
        (0..=n)
            .map(|i| ReconstructedBeat {
                device_id: "s1".into(),
                seq: i as u64,
                beat_ts: Timestamp(i as i64 * 1000),
                rr_ms: 1000,
                run: 0,
            })
            .collect()
    }

    #[test]
    fn sdnn_examples() {
        assert_eq!(sdnn(&[800.0, 800.0, 800.0]).unwrap(), 0.0);
        // sqrt((0 + 400 + 400 + 0) / 3)
        assert!((sdnn(&[800.0, 820.0, 780.0, 800.0]).unwrap() - 16.329_931_6).abs() < 1e-6);
        assert_eq!(sdnn(&[800.0]), Err(HrvError::TooFewSamples { needed: 2, got: 1 }));
    }

    #[test]
    fn rmssd_examples() {
        assert_eq!(rmssd(&[800.0, 800.0, 800.0]).unwrap(), 0.0);
        assert!((rmssd(&[800.0, 810.0, 790.0]).unwrap() - 250f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmssd(&[800.0, 900.0]).unwrap(), 100.0);
        assert!(rmssd(&[]).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(lf_hf_ratio(2.0, 1.0).unwrap(), 2.0);
        assert!((lf_norm(2.0, 1.0).unwrap() - 66.666_666_7).abs() < 1e-6);
        assert_eq!(lf_hf_ratio(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(lf_norm(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(lf_hf_ratio(1.0, 0.0), Err(HrvError::ZeroDenominator));
        assert_eq!(lf_norm(0.0, 0.0), Err(HrvError::ZeroDenominator));
        assert_eq!(lf_norm(-1.0, 2.0), Err(HrvError::NegativePower));
    }

    #[test]
    fn mean_hr_examples() {
        assert_eq!(mean_hr(&[800.0; 5]).unwrap(), 75.0);
        assert_eq!(mean_hr(&[1000.0; 5]).unwrap(), 60.0);
        assert_eq!(mean_hr(&[600.0, 1000.0]).unwrap(), 75.0);
        assert_eq!(mean_hr(&[]), Err(HrvError::EmptyInput));
    }

    #[test]
    fn constant_rr_has_no_band_power() {
        let beats = beats_from_rr(&[800; 400], 0);
        let bp = band_powers(&beats).unwrap();
        assert!(bp.lf <= 1e-9 && bp.hf <= 1e-9, "{bp:?}");
    }

    #[test]
    fn band_powers_preconditions() {
        let few = beats_from_rr(&[800; 20], 0);
        assert!(matches!(band_powers(&few), Err(HrvError::TooShortRecord(_))));
        let short = beats_from_rr(&[800; 100], 0); // 80 s
        assert!(matches!(band_powers(&short), Err(HrvError::TooShortRecord(_))));
    }

    #[test]
    fn tumbling_window_count() {
        let w = compute_hrv_windows(&second_beats(900), WindowMode::Tumbling, &HrvConfig::default()).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[1].window_start, Timestamp(300_000));
        assert!(w.iter().all(|x| x.window_end - x.window_start == 300_000));
        assert!(w.iter().all(|x| x.n_beats == 300));
    }

    #[test]
    fn sliding_window_count() {
        let w = compute_hrv_windows(&second_beats(600), WindowMode::Sliding { hop_s: 60.0 }, &HrvConfig::default())
            .unwrap();
        let starts: Vec<i64> = w.iter().map(|x| x.window_start.millis() / 1000).collect();
        assert_eq!(starts, vec![0, 60, 120, 180, 240, 300]);
    }

    #[test]
    fn short_record_has_no_windows() {
        let w = compute_hrv_windows(&second_beats(100), WindowMode::Tumbling, &HrvConfig::default()).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn window_errors() {
        let cfg = HrvConfig::default();
        assert_eq!(
            compute_hrv_windows(&second_beats(600), WindowMode::Sliding { hop_s: 0.0 }, &cfg),
            Err(HrvError::InvalidHop(0.0))
        );
        let mut b = second_beats(600);
        b.swap(3, 4);
        assert_eq!(compute_hrv_windows(&b, WindowMode::Tumbling, &cfg), Err(HrvError::UnsortedInput));
    }

    #[test]
    fn sparse_window_marks_hrv_absent() {
        // one beat every 20 s -> 15 beats per window
        let beats: Vec<ReconstructedBeat> = (0..=30)
            .map(|i| ReconstructedBeat {
                device_id: "s1".into(),
                seq: i,
                beat_ts: Timestamp(i as i64 * 20_000),
                rr_ms: 2000,
                run: i as u32,
            })
            .collect();
        let w = compute_hrv_windows(&beats, WindowMode::Tumbling, &HrvConfig::default()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].n_beats, 15);
        assert!(w[0].sdnn_ms.is_none() && w[0].lf_norm_pct.is_none());
    }

    #[test]
    fn constant_rr_normalizes_to_zero() {
        let beats = beats_from_rr(&[850; 800], 0);
        let s = normalized_hr_series(&beats, &HrvConfig::default()).unwrap();
        assert!(!s.samples.is_empty());
        assert!(s.samples.iter().all(|x| x.hr_minus_median.abs() < 1e-9));
        assert!((s.median_bpm - 60_000.0 / 850.0).abs() < 1e-9);
        assert_eq!(s.window_s, 300);
    }

    #[test]
    fn normalized_series_needs_five_minutes() {
        let beats = second_beats(299);
        assert!(matches!(
            normalized_hr_series(&beats, &HrvConfig::default()),
            Err(HrvError::TooShortRecord(_))
        ));
        let s = normalized_hr_series(&second_beats(300), &HrvConfig::default()).unwrap();
        assert_eq!(s.samples.len(), 1);
        assert_eq!(s.samples[0].ts, Timestamp(150_000));
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
