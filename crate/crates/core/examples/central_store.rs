//! Phones upload batches whenever they get connectivity. Retried uploads are
//! harmless and the store survives a restart.

use banfusion::ingest::{build_sync_batch, RrSample};
use banfusion::storage::Store;
use banfusion::{Record, RecordKind, TimeInterval, Timestamp};

fn records(from: u64, to: u64) -> Vec<Record> {
    (from..to)
        .map(|seq| {
            Record::Rr(RrSample {
                device_id: "subject1".into(),
                seq,
                rr_ms: 810,
                reception_ts: Timestamp(seq as i64 * 810 + 60),
            })
        })
        .collect()
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();

    let morning = build_sync_batch("subject1", Timestamp::MIN, &records(0, 100)).unwrap();
    let retry = morning.clone();
    let afternoon = build_sync_batch("subject1", Timestamp::MIN, &records(80, 200)).unwrap();
    for (name, batch) in [("morning", &morning), ("retry", &retry), ("afternoon", &afternoon)] {
        let o = store.merge_batch(batch).unwrap();
        println!("{name}: {} bits, {} new, {} already stored", batch.size_bits, o.inserted, o.duplicates);
    }
    store.flush().unwrap();
    drop(store);

    let store = Store::open(dir.path()).unwrap();
    println!("after reopening: {} records from {:?}", store.len(), store.devices());
    let range = TimeInterval::new(Timestamp(10_000), Timestamp(20_000));
    let hits = store.query("subject1", RecordKind::Rr, range).unwrap();
    println!("{} samples received between 10 s and 20 s", hits.len());
    for path in std::fs::read_dir(dir.path()).unwrap() {
        println!("  {}", path.unwrap().file_name().to_string_lossy());
    }
}
