use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use orbital_core::experiment::{self, exit_code, EXIT_INVALID, EXIT_OK};

/// Runs an orbital free probability experiment described by a JSON spec.
#[derive(Parser, Debug)]
#[command(name = "orbital", version)]
struct Args {
    /// Experiment spec (JSON).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Overrides the seed of the spec.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Worker threads; all logical cores by default.
    #[arg(long, value_name = "INT")]
    threads: Option<usize>,
    /// Output directory; overrides the spec's `output`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Validate the spec without running it.
    #[arg(long)]
    verify: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    ExitCode::from(run(&args) as u8)
}

fn run(args: &Args) -> i32 {
    let mut spec = match experiment::load_spec(&args.spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return EXIT_INVALID;
    }
    if args.verify {
        let report = experiment::verify(&spec);
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return if report.ok { EXIT_OK } else { EXIT_INVALID };
    }
    let out = args.out.clone().or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from("orbital-out"));
    match experiment::run(&spec, &out, args.threads) {
        Ok(outcome) => {
            println!("{} {:?}: {}", spec.experiment.name(), outcome.status, out.display());
            for f in &outcome.files {
                println!("  {}", f.display());
            }
            outcome.status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
