//! Group activity labels from median-normalized heart rate: elevation says
//! whether the group is active, dispersion across subjects separates shared
//! physical effort from a social task that stresses people unevenly.

use std::collections::BTreeMap;

use banfusion::activity::{classify_slices, ActivityParams};
use banfusion::config::Config;
use banfusion::pipeline::{analyze, Inputs};
use banfusion::scenario::ScenarioSpec;

fn main() {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let data = ScenarioSpec::preset("lunch", seed).unwrap().generate().unwrap();
    let bundle = analyze(&Inputs::from(&data), &Config::default(), None).unwrap();

    let series: BTreeMap<_, _> = bundle.normalized.iter().map(|s| (s.device_id.clone(), s.clone())).collect();
    let slices = classify_slices(&series, &bundle.movement, &ActivityParams::default()).unwrap();
    println!("slice     elevation  dispersion  moving  label");
    for s in slices.iter().step_by(5) {
        println!(
            "{:>6} s  {:>9.1}  {:>10.1}  {:>6}  {}",
            (s.start_ts - slices[0].start_ts) / 1000,
            s.group_elevation_bpm,
            s.dispersion_bpm,
            s.moving,
            s.label
        );
    }

    println!("\nsegments:");
    for seg in &bundle.segments {
        println!("  {:<9} {} .. {}  dispersion {:.1} bpm", seg.label, seg.start_ts, seg.end_ts, seg.dispersion_bpm);
    }
    println!("ground truth:");
    for p in &data.truth.phases {
        println!("  {:<9} {} .. {}", p.label, p.start_ts, p.end_ts);
    }
}
