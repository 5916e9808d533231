use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use banfusion::config::Config;
use banfusion::pipeline::{run_pipeline, summarize_report, REPORT_DIR};
use banfusion::scenario::{ScenarioError, ScenarioSpec};

#[derive(Parser)]
#[command(name = "banfusion", version, about = "Multi-subject BAN telemetry fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory holding the device streams; reports go to <data-dir>/report
    #[arg(long)]
    data_dir: PathBuf,
    /// JSON configuration file; defaults apply to anything it omits
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario into the data directory
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// lunch, colocation or stairs
        #[arg(long, default_value = "lunch")]
        scenario: String,
    },
    /// Run the full pipeline on the data directory
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize the written report, against ground truth when present
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config, ExitCode> {
    match path {
        None => Ok(Config::default()),
        Some(p) => Config::load(p).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match cli.command {
        Command::Simulate { common, seed, scenario } => {
            if let Err(code) = load_config(common.config.as_deref()) {
                return code;
            }
            let result = ScenarioSpec::preset(&scenario, seed)
                .and_then(|spec| spec.generate())
                .and_then(|data| data.write_to(&common.data_dir));
            match result {
                Ok(()) => {
                    println!("wrote scenario {scenario:?} (seed {seed}) to {}", common.data_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: simulate: {e}");
                    ExitCode::from(if matches!(e, ScenarioError::Io(_)) { 2 } else { 1 })
                }
            }
        }
        Command::Run { common } => {
            let config = match load_config(common.config.as_deref()) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match run_pipeline(&common.data_dir, &config) {
                Ok(bundle) => {
                    println!(
                        "{} hrv windows, {} segments, {} co-location events; report in {}",
                        bundle.hrv.len(),
                        bundle.segments.len(),
                        bundle.colocation.len(),
                        common.data_dir.join(REPORT_DIR).display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Report { common } => {
            if let Err(code) = load_config(common.config.as_deref()) {
                return code;
            }
            match summarize_report(&common.data_dir) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
