#![allow(dead_code)]

use banfusion::ingest::{GpsFix, ReconstructedBeat, RrSample};
use banfusion::Timestamp;

pub const T0: i64 = 1_700_000_000_000;

/// Beats whose times are the running sum of `rr`, first beat at `T0`.
pub fn beats_from_rr(device: &str, rr: &[u32]) -> Vec<ReconstructedBeat> {
    let mut t = T0;
    rr.iter()
        .enumerate()
        .map(|(i, &r)| {
            if i > 0 {
                t += r as i64;
            }
            ReconstructedBeat { device_id: device.into(), seq: i as u64, beat_ts: Timestamp(t), rr_ms: r, run: 0 }
        })
        .collect()
}

/// `duration_s` of beats with rr(t) = base + amp * sin(2 pi f t), in whole ms.
pub fn modulated_beats(base_ms: f64, amp_ms: f64, freq_hz: f64, duration_s: f64) -> Vec<ReconstructedBeat> {
    let mut rr = Vec::new();
    let mut t_ms = 0.0;
    while t_ms <= duration_s * 1000.0 {
        let r = (base_ms + amp_ms * (std::f64::consts::TAU * freq_hz * t_ms / 1000.0).sin()).round();
        rr.push(r as u32);
        t_ms += r;
    }
    beats_from_rr("s", &rr)
}

/// RR samples received `latency[i]` ms after each beat.
pub fn received(device: &str, rr: &[u32], latency: &[i64]) -> Vec<RrSample> {
    let mut t = T0;
    rr.iter()
        .zip(latency)
        .enumerate()
        .map(|(i, (&r, &l))| {
            t += r as i64;
            RrSample { device_id: device.into(), seq: i as u64, rr_ms: r, reception_ts: Timestamp(t + l) }
        })
        .collect()
}

pub fn fix(device: &str, ts_ms: i64, lat: f64, lon: f64, acc: f64) -> GpsFix {
    GpsFix { device_id: device.into(), ts: Timestamp(ts_ms), lat_deg: lat, lon_deg: lon, accuracy_m: acc }
}

/// Spherical law of cosines on a 6371 km sphere.
pub fn cosine_law_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
    6_371_000.0 * c.acos()
}

/// Linear interpolation of (t_s, v) on a uniform grid from the first point.
pub fn resample(times_s: &[f64], values: &[f64], fs: f64) -> Vec<f64> {
    let n = ((times_s[times_s.len() - 1] - times_s[0]) * fs).floor() as usize + 1;
    (0..n)
        .map(|j| {
            let t = times_s[0] + j as f64 / fs;
            let k = times_s.iter().rposition(|&x| x <= t).unwrap().min(times_s.len() - 2);
            let a = (t - times_s[k]) / (times_s[k + 1] - times_s[k]);
            values[k] + a.clamp(0.0, 1.0) * (values[k + 1] - values[k])
        })
        .collect()
}

/// LF and HF energy of the mean-removed series by a direct DFT.
pub fn dft_band_energy(series: &[f64], fs: f64, lf: (f64, f64), hf: (f64, f64)) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let (mut e_lf, mut e_hf) = (0.0, 0.0);
    for k in 1..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (j, x) in series.iter().enumerate() {
            let ang = -std::f64::consts::TAU * (k * j) as f64 / n as f64;
            re += (x - mean) * ang.cos();
            im += (x - mean) * ang.sin();
        }
        let p = re * re + im * im;
        if f >= lf.0 && f < lf.1 {
            e_lf += p;
        } else if f >= hf.0 && f < hf.1 {
            e_hf += p;
        }
    }
    (e_lf, e_hf)
}

/// Sample standard deviation straight from the definition.
pub fn brute_sdnn(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut total = 0.0;
    for v in x {
        total += v;
    }
    let mean = total / n;
    let mut ss = 0.0;
    for v in x {
        ss += (v - mean).powi(2);
    }
    (ss / (n - 1.0)).sqrt()
}

pub fn brute_rmssd(x: &[f64]) -> f64 {
    let mut ss = 0.0;
    for i in 1..x.len() {
        ss += (x[i] - x[i - 1]).powi(2);
    }
    (ss / (x.len() - 1) as f64).sqrt()
}

use std::collections::{BTreeMap, BTreeSet};

use banfusion::bus::{Bus, BusConfig, Subscription};
use banfusion::ingest::build_sync_batch;
use banfusion::storage::Store;
use banfusion::{Payload, Record, RecordKind, TimeInterval};

#[derive(Debug, Clone)]
pub enum BusOp {
    Subscribe { topic: usize },
    Publish { publisher: usize, topic: usize },
}

/// Replays `ops` on a fresh bus and checks that every subscriber received
/// exactly the envelopes published on its topic after it subscribed, once
/// each, with every publisher's sequence numbers strictly increasing.
pub fn check_bus_ops(ops: &[BusOp], n_topics: usize) -> Result<(), String> {
    let bus = Bus::with_clock(BusConfig::default(), || Timestamp(0));
    let topics: Vec<_> = (0..n_topics)
        .map(|i| bus.create_topic(&format!("rr/s{i}"), RecordKind::Rr).unwrap())
        .collect();
    let publishers: Vec<_> = (0..4).map(|i| bus.publisher(&format!("p{i}"))).collect();
    let mut subs: Vec<(usize, Subscription, Vec<(String, u64)>)> = Vec::new();
    let mut counter = 0u64;
    for op in ops {
        match *op {
            BusOp::Subscribe { topic } => {
                let s = bus.subscribe(&topics[topic], &format!("sub{}", subs.len())).unwrap();
                subs.push((topic, s, Vec::new()));
            }
            BusOp::Publish { publisher, topic } => {
                counter += 1;
                let payload = Payload::Rr(RrSample {
                    device_id: format!("s{topic}"),
                    seq: counter,
                    rr_ms: 800,
                    reception_ts: Timestamp(counter as i64),
                });
                let env = publishers[publisher].publish(&topics[topic], payload).unwrap();
                for (t, _, expected) in subs.iter_mut() {
                    if *t == topic {
                        expected.push((env.publisher_id.clone(), env.sequence));
                    }
                }
            }
        }
    }
    for (i, (_, sub, expected)) in subs.iter().enumerate() {
        let got: Vec<(String, u64)> = sub.drain().iter().map(|e| (e.publisher_id.clone(), e.sequence)).collect();
        if sub.delivery_count() != expected.len() as u64 {
            return Err(format!("subscriber {i}: delivery_count {} != {}", sub.delivery_count(), expected.len()));
        }
        let got_set: BTreeSet<_> = got.iter().cloned().collect();
        let want_set: BTreeSet<_> = expected.iter().cloned().collect();
        if got.len() != expected.len() || got_set != want_set {
            return Err(format!("subscriber {i}: got {got:?}, expected {expected:?}"));
        }
        let mut last: BTreeMap<&str, u64> = BTreeMap::new();
        for (p, seq) in &got {
            if let Some(prev) = last.insert(p, *seq) {
                if *seq <= prev {
                    return Err(format!("subscriber {i}: {p} went from {prev} to {seq}"));
                }
            }
        }
    }
    Ok(())
}

/// RR records of one device, keyed by the given sequence numbers.
pub fn rr_records(device: &str, seqs: &[u64]) -> Vec<Record> {
    seqs.iter()
        .map(|&s| {
            Record::Rr(RrSample {
                device_id: device.into(),
                seq: s,
                rr_ms: 500 + (s % 1000) as u32,
                reception_ts: Timestamp(T0 + s as i64 * 900),
            })
        })
        .collect()
}

pub fn merge(store: &mut Store, records: &[Record]) -> Result<(usize, usize), String> {
    let device = records.first().map(|r| r.device_id().to_string()).unwrap_or_default();
    let batch = build_sync_batch(&device, Timestamp::MIN, records).map_err(|e| e.to_string())?;
    let o = store.merge_batch(&batch).map_err(|e| e.to_string())?;
    Ok((o.inserted, o.duplicates))
}

/// Idempotency, disjoint commutativity and flush/reopen round trip.
pub fn check_store(a: &[u64], b: &[u64]) -> Result<(), String> {
    let ra = rr_records("subject1", a);
    let rb = rr_records("subject1", b);
    let ensure = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };

    let mut once = Store::in_memory();
    merge(&mut once, &ra)?;
    let mut twice = Store::in_memory();
    merge(&mut twice, &ra)?;
    let (ins, dup) = merge(&mut twice, &ra)?;
    ensure(ins == 0 && dup == ra.len(), "second merge inserted records")?;
    ensure(once.snapshot() == twice.snapshot(), "merge is not idempotent")?;

    let sa: BTreeSet<u64> = a.iter().copied().collect();
    if b.iter().all(|s| !sa.contains(s)) {
        let mut ab = Store::in_memory();
        merge(&mut ab, &ra)?;
        merge(&mut ab, &rb)?;
        let mut ba = Store::in_memory();
        merge(&mut ba, &rb)?;
        merge(&mut ba, &ra)?;
        // received_at depends on the batch, so compare bodies and keys
        let strip = |s: &Store| -> Vec<(String, Record)> {
            s.snapshot().into_values().map(|r| (format!("{:?}", r.key), r.body)).collect()
        };
        ensure(strip(&ab) == strip(&ba), "disjoint merges do not commute")?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut disk = Store::open(dir.path()).map_err(|e| e.to_string())?;
    merge(&mut disk, &ra)?;
    merge(&mut disk, &rb)?;
    disk.flush().map_err(|e| e.to_string())?;
    let before = disk.query("subject1", RecordKind::Rr, TimeInterval::everything()).map_err(|e| e.to_string())?;
    let snap = disk.snapshot();
    drop(disk);
    let reopened = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let after = reopened.query("subject1", RecordKind::Rr, TimeInterval::everything()).map_err(|e| e.to_string())?;
    ensure(before == after && snap == reopened.snapshot(), "reopen changed the store")?;
    let bytes: Vec<String> = before.iter().map(|r| r.body.to_json_line()).collect();
    let again: Vec<String> = after.iter().map(|r| r.body.to_json_line()).collect();
    ensure(bytes == again, "JSONL round trip is not bit-exact")
}
