//! Tachogram resampling and Welch power spectral density.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Spectral estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsdConfig {
    pub resample_hz: f64,
    pub segment_s: f64,
    /// Fraction of a segment shared with the next one.
    pub overlap: f64,
    pub lf_band_hz: (f64, f64),
    pub hf_band_hz: (f64, f64),
    pub min_span_s: f64,
    pub min_beats: usize,
}

impl Default for PsdConfig {
    fn default() -> Self {
        PsdConfig {
            resample_hz: 4.0,
            segment_s: 128.0,
            overlap: 0.5,
            lf_band_hz: (0.04, 0.15),
            hf_band_hz: (0.15, 0.4),
            min_span_s: 120.0,
            min_beats: 30,
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    /// Units of the input squared per Hz.
    pub density: Vec<f64>,
    pub segments: usize,
}

impl Psd {
    pub fn resolution_hz(&self) -> f64 {
        self.freqs_hz.get(1).copied().unwrap_or(0.0)
    }

    /// Rectangle-rule integral over `[lo, hi)`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.resolution_hz();
        self.freqs_hz
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, p)| p * df)
            .sum()
    }
}

/// Linearly interpolate the points `(t_s, value)` onto a uniform grid at
/// `rate_hz` starting at the first point. `times_s` must be non-decreasing.
pub fn resample_linear(times_s: &[f64], values: &[f64], rate_hz: f64) -> Vec<f64> {
    debug_assert_eq!(times_s.len(), values.len());
    let (Some(&t_first), Some(&t_last)) = (times_s.first(), times_s.last()) else {
        return Vec::new();
    };
    let n = ((t_last - t_first) * rate_hz).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for j in 0..n {
        let t = t_first + j as f64 / rate_hz;
        while k + 2 < times_s.len() && times_s[k + 1] <= t {
            k += 1;
        }
        let (t0, t1) = (times_s[k], times_s[(k + 1).min(times_s.len() - 1)]);
        let (v0, v1) = (values[k], values[(k + 1).min(values.len() - 1)]);
        let v = if t1 > t0 {
            let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            v0 + a * (v1 - v0)
        } else {
            v0
        };
        out.push(v);
    }
    out
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with a periodic Hann window. A series shorter than one
/// segment is treated as a single segment of its own length.
pub fn welch(series: &[f64], fs: f64, segment_len: usize, overlap: f64) -> Psd {
    let n = series.len();
    let nperseg = segment_len.min(n).max(1);
    let step = (nperseg - ((nperseg as f64 * overlap).round() as usize).min(nperseg - 1)).max(1);
    let window = hann(nperseg);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (fs * win_power);
    let bins = nperseg / 2 + 1;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(nperseg);
    let mut acc = vec![0.0; bins];
    let mut segments = 0;
    let mut buf = vec![Complex::new(0.0, 0.0); nperseg];
    let mut start = 0;
    while start + nperseg <= n {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(series[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let density = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (nperseg % 2 == 0 && k == nperseg / 2) { 1.0 } else { 2.0 };
            one_sided * a * scale / segments.max(1) as f64
        })
        .collect();
    let freqs_hz = (0..bins).map(|k| k as f64 * fs / nperseg as f64).collect();
    Psd { freqs_hz, density, segments }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_hits_grid_points() {
        let t = [0.0, 1.0, 3.0];
        let v = [0.0, 10.0, 30.0];
        let r = resample_linear(&t, &v, 2.0);
        assert_eq!(r, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    }

    #[test]
    fn resample_empty_and_single() {
        assert!(resample_linear(&[], &[], 4.0).is_empty());
        assert_eq!(resample_linear(&[2.0], &[7.0], 4.0), vec![7.0]);
    }

    #[test]
    fn parseval_for_white_series() {
        // integral of the one-sided PSD approximates the variance
        let fs = 4.0;
        let series: Vec<f64> = (0..4096)
            .map(|i| ((i as f64 * 12.9898).sin() * 43758.5453).fract() - 0.5)
            .collect();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
        let var = centered.iter().map(|x| x * x).sum::<f64>() / centered.len() as f64;
        let psd = welch(&centered, fs, 512, 0.5);
        let total = psd.band_power(0.0, fs);
        assert!((total - var).abs() / var < 0.1, "total {total} var {var}");
    }

    #[test]
    fn sinusoid_peak_lands_in_right_bin() {
        let fs = 4.0;
        let series: Vec<f64> = (0..2048)
            .map(|i| (2.0 * std::f64::consts::PI * 0.25 * i as f64 / fs).sin())
            .collect();
        let psd = welch(&series, fs, 512, 0.5);
        let (kmax, _) = psd
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!((psd.freqs_hz[kmax] - 0.25).abs() < psd.resolution_hz());
        assert_eq!(psd.segments, 7);
    }

    #[test]
    fn short_series_uses_one_segment() {
        let psd = welch(&[1.0, -1.0, 1.0, -1.0], 4.0, 512, 0.5);
        assert_eq!(psd.segments, 1);
        assert_eq!(psd.freqs_hz.len(), 3);
    }
}
