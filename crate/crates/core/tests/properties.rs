//! Invariants checked over generated inputs.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use banfusion::activity::{classify_segments, ActivityParams, ActivitySegment};
use banfusion::bus::{Bus, BusConfig};
use banfusion::geo::{
    colocated_pairs_at, detect_colocation, detect_movement, fixes_colocated, haversine_m, LatLon, MovementParams,
};
use banfusion::hrv::{compute_hrv_windows, lf_norm, normalized_hr_series, rmssd, sdnn, HrvConfig, WindowMode};
use banfusion::ingest::{data_rate_estimate, reconstruct_beat_times, GpsFix, ReconstructedBeat, RrSample};
use banfusion::timesync::{estimate_offset, from_common_clock, to_common_clock, ClockModel};
use banfusion::{Payload, RecordKind, Timestamp};
use common::*;

fn bus_op() -> impl Strategy<Value = BusOp> {
    prop_oneof![
        1 => (0..3usize).prop_map(|topic| BusOp::Subscribe { topic }),
        4 => (0..4usize, 0..3usize).prop_map(|(publisher, topic)| BusOp::Publish { publisher, topic }),
    ]
}

fn rr_series(min_len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(300u32..2000, min_len..min_len + 400)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bus_delivers_everything_in_publisher_order(ops in prop::collection::vec(bus_op(), 1..200)) {
        check_bus_ops(&ops, 3).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn store_is_idempotent_commutative_and_durable(
        a in prop::collection::btree_set(0u64..500, 1..60),
        b in prop::collection::btree_set(500u64..1000, 1..60),
        overlap in prop::collection::btree_set(0u64..1000, 0..20),
    ) {
        let a: Vec<u64> = a.into_iter().collect();
        let b: Vec<u64> = b.into_iter().collect();
        check_store(&a, &b).map_err(TestCaseError::fail)?;
        // overlapping second batch: the union is stored once
        let mut with_overlap: BTreeSet<u64> = a.iter().copied().collect();
        with_overlap.extend(&overlap);
        let c: Vec<u64> = with_overlap.into_iter().collect();
        check_store(&a, &c).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn time_domain_matches_brute_force(rr in prop::collection::vec(250.0f64..2500.0, 2..500)) {
        prop_assert!(close(sdnn(&rr).unwrap(), brute_sdnn(&rr), 1e-9));
        prop_assert!(close(rmssd(&rr).unwrap(), brute_rmssd(&rr), 1e-9));
    }

    #[test]
    fn time_domain_scales_linearly(rr in prop::collection::vec(250.0f64..2500.0, 2..200), k in 0.1f64..10.0) {
        let scaled: Vec<f64> = rr.iter().map(|x| x * k).collect();
        prop_assert!(close(sdnn(&scaled).unwrap(), k * sdnn(&rr).unwrap(), 1e-9));
        prop_assert!(close(rmssd(&scaled).unwrap(), k * rmssd(&rr).unwrap(), 1e-9));
        // powers of two scale without rounding
        let doubled: Vec<f64> = rr.iter().map(|x| x * 2.0).collect();
        prop_assert_eq!(sdnn(&doubled).unwrap(), 2.0 * sdnn(&rr).unwrap());
        prop_assert_eq!(rmssd(&doubled).unwrap(), 2.0 * rmssd(&rr).unwrap());
    }

    #[test]
    fn normalized_band_powers_sum_to_100(lf in 1e-6f64..1e6, hf in 1e-6f64..1e6) {
        let sum = lf_norm(lf, hf).unwrap() + lf_norm(hf, lf).unwrap();
        prop_assert!((sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_conserves_and_anchors(
        rr in prop::collection::vec(400u32..1500, 1..300),
        base in 20i64..200,
        jitter in prop::collection::vec(0i64..150, 300),
    ) {
        let latency: Vec<i64> = jitter.iter().take(rr.len()).map(|j| base + j).collect();
        let samples = received("d", &rr, &latency);
        let beats = reconstruct_beat_times(&samples, 500).unwrap();
        prop_assert_eq!(beats.len(), samples.len());
        prop_assert!(beats.iter().zip(&samples).all(|(b, s)| b.rr_ms == s.rr_ms && b.seq == s.seq));
        for run in banfusion::ingest::runs(&beats) {
            for w in run.windows(2) {
                prop_assert_eq!(w[1].beat_ts - w[0].beat_ts, w[1].rr_ms as i64);
            }
            let residual: i64 = run
                .iter()
                .map(|b| samples.iter().find(|s| s.seq == b.seq).unwrap().reception_ts - b.beat_ts)
                .sum();
            prop_assert!((residual as f64 / run.len() as f64).abs() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn data_rate_is_monotone(b in 1u32..1000, hr in 20.0f64..220.0, db in 1u32..100, dhr in 0.1f64..50.0) {
        let r = data_rate_estimate(b, hr).unwrap();
        prop_assert!(data_rate_estimate(b + db, hr).unwrap() > r);
        prop_assert!(data_rate_estimate(b, hr + dhr).unwrap() > r);
    }

    #[test]
    fn clock_round_trip(ts in -1_000_000_000_000i64..4_000_000_000_000, offset in -2000i64..=2000) {
        let m = ClockModel::new("d", offset);
        let t = Timestamp(ts);
        prop_assert_eq!(to_common_clock(from_common_clock(t, &m).unwrap(), &m).unwrap(), t);
        prop_assert_eq!(from_common_clock(to_common_clock(t, &m).unwrap(), &m).unwrap(), t);
    }

    #[test]
    fn offset_estimate_error_is_half_delay_asymmetry(
        t0 in 0i64..1_000_000_000,
        theta in -5000i64..5000,
        d_out in 0i64..500,
        d_back in 0i64..500,
        proc in 0i64..50,
    ) {
        // remote = local + theta
        let t1 = t0 + d_out + theta;
        let t2 = t1 + proc;
        let t3 = t2 - theta + d_back;
        let est = estimate_offset(Timestamp(t0), Timestamp(t1), Timestamp(t2), Timestamp(t3)).unwrap();
        prop_assert!((est - theta as f64).abs() <= (d_out - d_back).abs() as f64 / 2.0 + 1e-9);
        let sym = estimate_offset(Timestamp(t0), Timestamp(t0 + d_out + theta), Timestamp(t0 + d_out + theta + proc),
            Timestamp(t0 + 2 * d_out + proc)).unwrap();
        prop_assert_eq!(sym, theta as f64);
    }

    #[test]
    fn haversine_symmetric_and_triangular(
        p in (-80.0f64..80.0, -179.0f64..179.0),
        q in (-80.0f64..80.0, -179.0f64..179.0),
        r in (-80.0f64..80.0, -179.0f64..179.0),
    ) {
        let (a, b, c) = (LatLon::new(p.0, p.1), LatLon::new(q.0, q.1), LatLon::new(r.0, r.1));
        let ab = haversine_m(a, b).unwrap();
        prop_assert_eq!(ab, haversine_m(b, a).unwrap());
        prop_assert!(ab <= haversine_m(a, c).unwrap() + haversine_m(c, b).unwrap() + 1e-6);
        prop_assert_eq!(haversine_m(a, a).unwrap(), 0.0);
    }

    #[test]
    fn colocation_rule_is_symmetric_and_monotone_in_accuracy(
        offs in prop::collection::vec((-60.0f64..60.0, -60.0f64..60.0, 4.0f64..30.0), 2..6),
        extra in 0.0f64..20.0,
    ) {
        let origin = LatLon::new(45.78, 4.87);
        let mk = |bump: f64| -> BTreeMap<String, Vec<GpsFix>> {
            offs.iter().enumerate().map(|(i, (e, n, acc))| {
                let p = origin.offset_m(*e, *n);
                let id = format!("s{i}");
                let f = fix(&id, T0, p.lat_deg, p.lon_deg, acc + bump);
                (id, vec![f])
            }).collect()
        };
        let base = mk(0.0);
        let fixes: Vec<&GpsFix> = base.values().map(|v| &v[0]).collect();
        for a in &fixes {
            for b in &fixes {
                prop_assert_eq!(fixes_colocated(a, b, 20.0), fixes_colocated(b, a, 20.0));
            }
        }
        let before: BTreeSet<_> = colocated_pairs_at(&base, Timestamp(T0), 2.0, 20.0).into_iter().collect();
        let after: BTreeSet<_> = colocated_pairs_at(&mk(extra), Timestamp(T0), 2.0, 20.0).into_iter().collect();
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn colocation_events_ignore_subject_names(
        tracks in prop::collection::vec(prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0), 30), 2..5),
        perm_seed in any::<u64>(),
    ) {
        let origin = LatLon::new(45.78, 4.87);
        let build = |names: &[String]| -> BTreeMap<String, Vec<GpsFix>> {
            tracks.iter().zip(names).map(|(t, id)| {
                let fixes = t.iter().enumerate().map(|(k, (e, n))| {
                    let p = origin.offset_m(*e, *n);
                    fix(id, T0 + k as i64 * 2000, p.lat_deg, p.lon_deg, 5.0)
                }).collect();
                (id.clone(), fixes)
            }).collect()
        };
        let names: Vec<String> = (0..tracks.len()).map(|i| format!("s{i}")).collect();
        let mut renamed: Vec<String> = (0..tracks.len()).map(|i| format!("x{}", (i as u64 * 7 + perm_seed) % 97)).collect();
        renamed.sort();
        renamed.dedup();
        prop_assume!(renamed.len() == tracks.len());
        // rotate so the name order differs from the track order
        renamed.rotate_left((perm_seed as usize) % tracks.len());
        let map: BTreeMap<&String, &String> = names.iter().zip(&renamed).collect();

        let summarize = |ev: Vec<banfusion::geo::ColocationEvent>, rename: bool| -> BTreeSet<(Vec<String>, i64, i64)> {
            ev.into_iter().map(|e| {
                let mut ids: Vec<String> = e.subject_ids.iter()
                    .map(|s| if rename { (*map[s]).clone() } else { s.clone() })
                    .collect();
                ids.sort();
                (ids, e.start_ts.millis(), e.end_ts.millis())
            }).collect()
        };
        let a = summarize(detect_colocation(&build(&names), 2.0, 20.0).unwrap(), true);
        let b = summarize(detect_colocation(&build(&renamed), 2.0, 20.0).unwrap(), false);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stationary_subject_never_moves(
        n in 30usize..300,
        acc in 4.0f64..50.0,
        period_ms in 1000i64..5000,
    ) {
        let fixes: Vec<GpsFix> = (0..n).map(|k| fix("s", T0 + k as i64 * period_ms, 45.78, 4.87, acc)).collect();
        prop_assert!(detect_movement(&fixes, &MovementParams::default()).unwrap().is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hrv_windows_invariant_under_time_shift(rr in rr_series(500), shift in -10_000_000i64..10_000_000) {
        let beats = beats_from_rr("s", &rr);
        let shifted: Vec<ReconstructedBeat> = beats
            .iter()
            .map(|b| ReconstructedBeat { beat_ts: b.beat_ts.add_ms(shift), ..b.clone() })
            .collect();
        let cfg = HrvConfig { window_s: 120, ..HrvConfig::default() };
        let a = compute_hrv_windows(&beats, WindowMode::Tumbling, &cfg).unwrap();
        let b = compute_hrv_windows(&shifted, WindowMode::Tumbling, &cfg).unwrap();
        prop_assert_eq!(a.len(), b.len());
        let same = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) => close(x, y, 1e-9),
            (None, None) => true,
            _ => false,
        };
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.window_start.add_ms(shift), y.window_start);
            prop_assert_eq!(x.n_beats, y.n_beats);
            prop_assert!(same(x.sdnn_ms, y.sdnn_ms) && same(x.rmssd_ms, y.rmssd_ms) && same(x.mean_hr_bpm, y.mean_hr_bpm));
            prop_assert!(same(x.lf_power, y.lf_power) && same(x.hf_power, y.hf_power) && same(x.lf_norm_pct, y.lf_norm_pct));
        }
    }

    #[test]
    fn segments_ignore_hr_offset(c in -10.0f64..10.0) {
        let base = segment_group(&names(4, "s"), 0.0);
        let shifted = segment_group(&names(4, "s"), c);
        prop_assert_eq!(labels(&base), labels(&shifted));
        for (x, y) in base.iter().zip(&shifted) {
            prop_assert!((x.start_ts - y.start_ts).abs() <= 60_000);
        }
    }

    #[test]
    fn segments_ignore_subject_names(rot in 0usize..4, prefix in "[a-z]{1,6}") {
        let base = segment_group(&names(4, "s"), 0.0);
        let mut other = names(4, &prefix);
        other.rotate_left(rot);
        let relabeled = segment_group(&other, 0.0);
        prop_assert_eq!(labels(&base), labels(&relabeled));
        for (x, y) in base.iter().zip(&relabeled) {
            prop_assert_eq!((x.start_ts, x.end_ts), (y.start_ts, y.end_ts));
            prop_assert!((x.group_elevation_bpm - y.group_elevation_bpm).abs() < 1e-9);
        }
    }
}

#[test]
fn bus_delivers_across_threads() {
    let bus = Bus::new(BusConfig::default());
    let topic = bus.create_topic("rr/s", RecordKind::Rr).unwrap();
    let subs: Vec<_> = (0..3).map(|i| bus.subscribe(&topic, &format!("sub{i}")).unwrap()).collect();
    std::thread::scope(|scope| {
        for p in 0..4 {
            let publisher = bus.publisher(&format!("p{p}"));
            let topic = topic.clone();
            scope.spawn(move || {
                for k in 0..500u64 {
                    let payload = Payload::Rr(RrSample {
                        device_id: "s".into(),
                        seq: k,
                        rr_ms: 800,
                        reception_ts: Timestamp(k as i64),
                    });
                    publisher.publish(&topic, payload).unwrap();
                }
            });
        }
    });
    for sub in subs {
        let got: Vec<Arc<banfusion::bus::TopicEnvelope>> = sub.drain();
        assert_eq!(got.len(), 2000);
        let mut last: BTreeMap<String, u64> = BTreeMap::new();
        for e in &got {
            if let Some(prev) = last.insert(e.publisher_id.clone(), e.sequence) {
                assert_eq!(e.sequence, prev + 1);
            }
        }
        assert_eq!(last.len(), 4);
    }
}

fn names(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn labels(segments: &[ActivitySegment]) -> Vec<&'static str> {
    segments.iter().map(|s| s.label.as_str()).collect()
}

/// Four subjects through rest, shared exertion, uneven stress and rest, each
/// held at a constant heart rate per phase. `names[i]` plays subject `i`.
fn segment_group(names: &[String], offset_bpm: f64) -> Vec<ActivitySegment> {
    // rest dominates so each subject's median is its resting rate
    const ENDS_S: [f64; 4] = [1200.0, 1800.0, 2400.0, 4200.0];
    let base = [62.0, 70.0, 66.0, 75.0];
    let delta = [[0.0, 12.0, 14.0, 0.0], [0.0, 11.0, 9.0, 0.0], [0.0, 12.0, 0.0, 0.0], [0.0, 13.0, 1.0, 0.0]];
    let cfg = HrvConfig::default();
    let series: BTreeMap<String, _> = names
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut rr = Vec::new();
            let mut t = 0.0;
            while t < ENDS_S[3] {
                let phase = ENDS_S.iter().position(|e| t < *e).unwrap();
                let hr = base[i] + delta[i][phase] + offset_bpm;
                let r = (60_000.0 / hr).round();
                rr.push(r as u32);
                t += r / 1000.0;
            }
            let beats: Vec<ReconstructedBeat> =
                beats_from_rr(id, &rr).into_iter().map(|b| ReconstructedBeat { device_id: id.clone(), ..b }).collect();
            (id.clone(), normalized_hr_series(&beats, &cfg).unwrap())
        })
        .collect();
    classify_segments(&series, &[], &ActivityParams::default()).unwrap()
}

#[test]
fn synthetic_group_is_segmented_as_designed() {
    let seg = segment_group(&names(4, "s"), 0.0);
    assert_eq!(labels(&seg), ["rest", "physical", "cognitive", "rest"]);
}
