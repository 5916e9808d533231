//! Co-location of four colleagues over a simulated lunch. Writes the fixes
//! and events as GeoJSON to the path given as argument, if any.

use banfusion::geo::{detect_colocation, detect_movement, to_geojson, MovementParams};
use banfusion::scenario::ScenarioSpec;

fn main() {
    let data = ScenarioSpec::preset("lunch", 1).unwrap().generate().unwrap();
    let events = detect_colocation(&data.gps, 2.0, 20.0).unwrap();
    for e in &events {
        println!(
            "{:?} together from {} to {} ({} min), spread up to {:.0} m",
            e.subject_ids,
            e.start_ts,
            e.end_ts,
            (e.end_ts - e.start_ts) / 60_000,
            e.max_spread_m
        );
    }
    for stay in &data.truth.stays {
        println!("ground truth: {} from {} to {}", stay.site, stay.start_ts, stay.end_ts);
    }
    for (subject, fixes) in &data.gps {
        let moves = detect_movement(fixes, &MovementParams::default()).unwrap();
        let spans: Vec<String> =
            moves.iter().map(|m| format!("{:.0} m in {} s", m.displacement_m, (m.end_ts - m.start_ts) / 1000)).collect();
        println!("{subject} moved {} times: {}", moves.len(), spans.join(", "));
    }

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, to_geojson(&data.gps, &events)).unwrap();
        println!("wrote {path}");
    }
}
