//! Simulate a scenario into a directory, run the pipeline and print the
//! report summary. Usage: end_to_end [scenario] [seed] [data-dir]

use std::path::PathBuf;

use banfusion::config::Config;
use banfusion::pipeline::{run_pipeline, summarize_report};
use banfusion::scenario::ScenarioSpec;

fn main() {
    let mut args = std::env::args().skip(1);
    let scenario = args.next().unwrap_or_else(|| "lunch".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let tmp = tempfile::tempdir().unwrap();
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let spec = ScenarioSpec::preset(&scenario, seed).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1);
    });
    spec.generate().unwrap().write_to(&dir).unwrap();
    let bundle = run_pipeline(&dir, &Config::default()).unwrap();
    println!("{} subjects, {} HRV windows", bundle.normalized.len(), bundle.hrv.len());
    print!("{}", summarize_report(&dir).unwrap());
}
