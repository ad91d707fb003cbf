use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coreset_bench::commands::{self, EXIT_CONFIG};
use coreset_bench::{BenchError, ExperimentSpec, Method};

#[derive(Parser)]
#[command(name = "coreset-bench", version, about = "Coreset MCMC experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write records, final weights and a checkpoint.
    Train(RunArgs),
    /// Draw samples with frozen weights from a training checkpoint.
    Sample {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to resume (default: OUT/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every sweep point and replicate of a spec.
    Sweep(RunArgs),
    /// Run the uniform-subsampling baseline (no weight adaptation).
    Baseline(RunArgs),
    /// Recompute the summary table from a records file.
    Metrics {
        /// records.jsonl written by a previous run.
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; replicate r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the spec's out_dir, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replicate count override.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentSpec, PathBuf), BenchError> {
        let mut spec = ExperimentSpec::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if let Some(r) = self.replicates {
            spec.replicates = r;
        }
        if let Some(0) = self.threads {
            return Err(BenchError::Config("--threads must be at least 1".into()));
        }
        spec.validate()?;
        let out = self.out.clone().or_else(|| spec.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok((spec, out))
    }
}

fn run(cli: Cli) -> Result<i32, BenchError> {
    match cli.command {
        Command::Train(args) => {
            let (spec, out) = args.load()?;
            commands::train(&spec, &out)
        }
        Command::Sample { run, checkpoint } => {
            let (spec, out) = run.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| out.join("checkpoint.json"));
            commands::sample(&spec, &ckpt, &out)
        }
        Command::Sweep(args) => {
            let (spec, out) = args.load()?;
            commands::sweep(&spec, spec.method, &out, args.threads)
        }
        Command::Baseline(args) => {
            let (spec, out) = args.load()?;
            commands::sweep(&spec, Method::Unif, &out, args.threads)
        }
        Command::Metrics { records, out } => commands::metrics(&records, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
