use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use pisto_bench::{generate_scenes, read_rows, run_experiment, summarize, write_results, write_scenes, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pisto-bench", version, about = "Benchmark harness for the pisto trajectory optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task × method × seed of a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this method.
        #[arg(long)]
        method: Option<String>,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Write generated scene files.
    GenScenes {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        difficulty: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-method aggregates of a results CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, method, seed, out, samples, iterations } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(m) = method {
                cfg.methods = vec![m];
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            if let Some(m) = samples {
                cfg.samples = m;
            }
            if let Some(k) = iterations {
                cfg.iterations = k;
            }
            let (tasks, records) = run_experiment(&cfg)?;
            write_results(&cfg.output, &tasks, &records)?;
            let aborted: Vec<_> = records.iter().filter(|r| r.aborted()).collect();
            for r in &aborted {
                if let Err(msg) = &r.outcome {
                    eprintln!("aborted: task={} method={} seed={}: {msg}", r.task, r.method, r.seed);
                }
            }
            println!("wrote {} runs to {}", records.len(), cfg.output.display());
            Ok(if aborted.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::GenScenes { seed, count, difficulty, out } => {
            let scenes = generate_scenes(seed, count, difficulty)?;
            let paths = write_scenes(&out, &scenes)?;
            println!("wrote {} scenes to {}", paths.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { input } => {
            let rows = read_rows(&input)?;
            print!("{}", pisto_bench::summary::format_table(&summarize(&rows)));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
