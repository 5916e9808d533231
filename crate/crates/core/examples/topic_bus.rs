//! Two phones publish R-R samples on per-subject topics. A subscriber that
//! joins late only sees what is published after it subscribed.

use banfusion::bus::{topic_name, Bus, BusConfig};
use banfusion::ingest::RrSample;
use banfusion::{Payload, RecordKind, Timestamp};

fn sample(subject: &str, seq: u64) -> Payload {
    Payload::Rr(RrSample {
        device_id: subject.into(),
        seq,
        rr_ms: 800 + (seq as u32 % 5) * 10,
        reception_ts: Timestamp(seq as i64 * 800),
    })
}

fn main() {
    let bus = Bus::new(BusConfig::default());
    let alice = bus.create_topic(&topic_name(RecordKind::Rr, "alice"), RecordKind::Rr).unwrap();
    let bob = bus.create_topic(&topic_name(RecordKind::Rr, "bob"), RecordKind::Rr).unwrap();

    let early = bus.subscribe(&alice, "dashboard").unwrap();
    let phone_a = bus.publisher("phone-alice");
    let phone_b = bus.publisher("phone-bob");

    for seq in 0..3 {
        phone_a.publish(&alice, sample("alice", seq)).unwrap();
        phone_b.publish(&bob, sample("bob", seq)).unwrap();
    }
    let late = bus.subscribe(&alice, "late-joiner").unwrap();
    for seq in 3..5 {
        phone_a.publish(&alice, sample("alice", seq)).unwrap();
    }

    for sub in [&early, &late] {
        let got = sub.drain();
        println!("{} on {}: {} envelopes", sub.subscriber_id(), sub.topic_name(), got.len());
        for env in got {
            println!("  {} #{} {:?}", env.publisher_id, env.sequence, env.payload.kind());
        }
    }
    println!("topics: {:?}", bus.topic_names());
}
