use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsqn_core::problems::{synth_lowrank, SynthParams};
use rsqn_core::GeometryFlavor;
use rsqn_harness::{run_case, write_report, write_synthetic, ExperimentConfig, HarnessError, Instance, ProblemSpec};

#[derive(Parser)]
#[command(name = "rsqn", version, about = "Run R-SQN-VR experiments and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every optimizer, step size and seed of a case and write the metric CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds (overrides `seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Number of runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Generate a synthetic low-rank completion instance as text triples.
    GenSynth {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        os: f64,
        #[arg(long)]
        cn: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the reference optimum f* of a Karcher case.
    Reference {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Run { config, out, seeds, parallel } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            if let Some(seeds) = seeds {
                if seeds.is_empty() {
                    return Err(HarnessError::ConfigInvalid("empty seed list".into()));
                }
                cfg.seeds = seeds;
            }
            if parallel == 0 {
                return Err(HarnessError::ConfigInvalid("--parallel must be at least 1".into()));
            }
            let report = run_case(&cfg, parallel)?;
            let failed = report.runs.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                log::warn!("{failed} of {} runs failed; see the NA rows", report.runs.len());
            }
            for b in &report.best {
                log::info!("best alpha for {}: {:e} (median final {:e})", b.kind, b.alpha, b.median_final);
            }
            for path in write_report(&cfg, &report)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::GenSynth { d, n, r, os, cn, sigma, seed, out } => {
            let params = SynthParams { d, n, r, os, cn, sigma, seed };
            let data = synth_lowrank::<f64>(&params, 0.0, GeometryFlavor::QR_PROJECTION)
                .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
            write_synthetic(&data, &out)?;
            println!("{} training and {} test entries written to {}", data.problem.num_observed(), data.test.len(), out.display());
            Ok(())
        }
        Command::Reference { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            if !matches!(cfg.problem, ProblemSpec::Karcher { .. }) {
                return Err(HarnessError::ConfigInvalid("reference is defined for Karcher cases".into()));
            }
            match Instance::build(&cfg.problem)? {
                Instance::Karcher { f_star, .. } => println!("{f_star:e}"),
                Instance::Completion { .. } => unreachable!("checked above"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RSQN_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
