//! Phones stamp R-R samples when they arrive, not when the beat happened.
//! This rebuilds beat times from the intervals and shows how a Bluetooth
//! dropout splits the record into separate runs.

use banfusion::ingest::{reconstruct_beat_times, runs, RrSample, DEFAULT_GAP_TOLERANCE_MS};
use banfusion::Timestamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut beat = 0i64;
    let mut samples = Vec::new();
    for seq in 0..40u64 {
        let rr = rng.random_range(750..900u32);
        beat += rr as i64;
        let mut arrival = beat + rng.random_range(40..140);
        if seq >= 25 {
            // the link dropped for 10 s and the phone caught up afterwards
            arrival += 10_000;
        }
        samples.push(RrSample { device_id: "subject1".into(), seq, rr_ms: rr, reception_ts: Timestamp(arrival) });
    }

    let beats = reconstruct_beat_times(&samples, DEFAULT_GAP_TOLERANCE_MS).unwrap();
    for (i, run) in runs(&beats).iter().enumerate() {
        let residual: i64 = run
            .iter()
            .map(|b| samples[b.seq as usize].reception_ts - b.beat_ts)
            .sum();
        println!(
            "run {i}: seq {}..={}, {} beats, mean reception lag {:.1} ms",
            run[0].seq,
            run[run.len() - 1].seq,
            run.len(),
            residual as f64 / run.len() as f64
        );
    }
    for b in beats.iter().take(5) {
        let s = &samples[b.seq as usize];
        println!("seq {:>2}: received {:>6} ms, beat at {:>6} ms", b.seq, s.reception_ts.millis(), b.beat_ts.millis());
    }
}
