//! How much data one subject produces and how long the upload takes over a
//! BLE 4 link. Pass a heart rate in bpm to change the assumption.

use banfusion::ingest::{
    build_sync_batch, data_rate_estimate, estimate_sync_duration, RrSample, BLE4_RATE_BITS_PER_S,
};
use banfusion::{Record, Timestamp};

fn main() {
    let hr: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(66.0);

    let rate = data_rate_estimate(40, hr).unwrap();
    let per_day = rate * 86_400.0;
    println!("40-byte samples at {hr} bpm: {rate:.0} bit/s, {:.1} Mbit per day", per_day / 1e6);
    println!("daily upload at BLE 4 rate: {:.1} s", estimate_sync_duration(per_day, BLE4_RATE_BITS_PER_S).unwrap());
    let budget_bits = 900.0 * BLE4_RATE_BITS_PER_S;
    println!("a 15 minute window moves at most {:.0} Mbit", budget_bits / 1e6);

    // an hour of actual JSONL records
    let rr_ms = (60_000.0 / hr).round() as u32;
    let records: Vec<Record> = (0..3_600_000 / rr_ms as i64)
        .map(|i| {
            Record::Rr(RrSample {
                device_id: "subject1".into(),
                seq: i as u64,
                rr_ms,
                reception_ts: Timestamp((i + 1) * rr_ms as i64),
            })
        })
        .collect();
    let batch = build_sync_batch("subject1", Timestamp::MIN, &records).unwrap();
    let bytes = batch.size_bits as f64 / 8.0 / records.len() as f64;
    println!(
        "one hour as JSONL: {} records, {:.1} bytes each, {:.2} Mbit, {:.1} s to upload",
        records.len(),
        bytes,
        batch.size_bits as f64 / 1e6,
        estimate_sync_duration(batch.size_bits as f64, BLE4_RATE_BITS_PER_S).unwrap()
    );
}
