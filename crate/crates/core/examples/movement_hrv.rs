//! A single subject walks to another building and back. Movement intervals
//! come from GPS; the HRV windows covering them show the exertion.

use banfusion::config::Config;
use banfusion::pipeline::{analyze, Inputs};
use banfusion::scenario::ScenarioSpec;

fn main() {
    let data = ScenarioSpec::preset("stairs", 4).unwrap().generate().unwrap();
    let bundle = analyze(&Inputs::from(&data), &Config::default(), None).unwrap();

    for m in &bundle.movement {
        println!(
            "moving {} .. {}: {:.0} m at {:.2} m/s",
            m.start_ts, m.end_ts, m.displacement_m, m.mean_speed_mps
        );
    }
    for w in &bundle.hrv {
        let during = bundle.movement.iter().any(|m| m.interval().overlaps(&w.interval()));
        println!(
            "{} .. {}  HR {:5.1}  SDNN {:5.1}  RMSSD {:5.1}{}",
            w.window_start,
            w.window_end,
            w.mean_hr_bpm.unwrap_or(f64::NAN),
            w.sdnn_ms.unwrap_or(f64::NAN),
            w.rmssd_ms.unwrap_or(f64::NAN),
            if during { "  <- walking" } else { "" }
        );
    }
    println!("segments: {} (one subject gives no group to compare)", bundle.segments.len());
}
