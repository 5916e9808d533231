//! Time and frequency domain HRV over sliding windows of a synthetic record
//! whose breathing rhythm moves from slow to fast halfway through.

use banfusion::hrv::{compute_hrv_windows, hrv_csv, HrvConfig, WindowMode};
use banfusion::ingest::ReconstructedBeat;
use banfusion::Timestamp;

fn main() {
    let mut beats = Vec::new();
    let mut t_ms = 0.0f64;
    let mut seq = 0u64;
    while t_ms < 1_200_000.0 {
        // 0.1 Hz modulation first, 0.25 Hz after ten minutes
        let f = if t_ms < 600_000.0 { 0.1 } else { 0.25 };
        let rr = (820.0 + 40.0 * (std::f64::consts::TAU * f * t_ms / 1000.0).sin()).round();
        t_ms += rr;
        beats.push(ReconstructedBeat {
            device_id: "subject1".into(),
            seq,
            beat_ts: Timestamp(t_ms as i64),
            rr_ms: rr as u32,
            run: 0,
        });
        seq += 1;
    }

    let cfg = HrvConfig::default();
    let windows = compute_hrv_windows(&beats, WindowMode::Sliding { hop_s: 150.0 }, &cfg).unwrap();
    print!("{}", hrv_csv(&windows));
    for w in &windows {
        let lf = w.lf_norm_pct.unwrap_or(f64::NAN);
        let bar = "#".repeat((lf / 5.0).round().max(0.0) as usize);
        println!("{:>7} s  LF norm {lf:5.1}% {bar}", w.window_start.millis() / 1000);
    }
}
