//! Command-line entry point.

use std::path::PathBuf;

use clap::Parser;

use crate::config::ExperimentConfig;
use crate::emit::{emit_results, Format};
use crate::runner::{run_experiment, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Runs a Monte-Carlo experiment described by a TOML or JSON config.
#[derive(Debug, Parser)]
#[command(name = "dpdep-run", version)]
pub struct Cli {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, env = "DPDEP_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed_override: Option<u64>,
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return EXIT_CONFIG;
    }
    let opts = RunOptions { threads: cli.threads, seed_override: cli.seed_override };
    let stats = match run_experiment(&cfg, opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    for s in &stats {
        println!(
            "{} {} n={} T={} d={} eps={:.4} mse={:.6e} median_se={:.6e} hist_fail={:.3} clip={:.4} ({:.2}s)",
            s.experiment_id,
            s.estimator,
            s.n,
            s.t,
            s.d,
            s.epsilon,
            s.mse,
            s.median_se,
            s.hist_failure_rate,
            s.clip_rate,
            s.runtime_secs
        );
    }
    if let Err(e) = emit_results(&stats, &cli.out, cli.format) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    EXIT_OK
}
