use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssp_bench::commands::{self, Common, EXIT_FAILURE, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "ssp-bench", version, about = "Mini-batch SSP benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the seed of the config (base seed for sweeps).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for logs, results and the reference cache.
    #[arg(long, global = true, env = "SSP_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,

    /// Override the epoch budget.
    #[arg(long, global = true)]
    max_epochs: Option<usize>,

    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config; exit 0 converged, 1 invalid config, 2 budget, 3 diverged.
    Run { config: PathBuf },
    /// Run every (tau1, tau2) cell of a sweep spec.
    Sweep { spec: PathBuf },
    /// Check a config without solving.
    Validate { config: PathBuf },
    /// Write the instance JSON of a generator spec.
    MakeInstance {
        spec: PathBuf,
        /// Output path; defaults to `<out-dir>/<spec stem>.instance.json`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_INVALID as u8);
    }
    let common = Common {
        seed: cli.seed,
        out_dir: cli.out_dir,
        max_epochs: cli.max_epochs,
        threads: cli.threads,
    };
    let result = match &cli.command {
        Command::Run { config } => commands::cmd_run(config, &common),
        Command::Sweep { spec } => commands::cmd_sweep(spec, &common),
        Command::Validate { config } => commands::cmd_validate(config, &common),
        Command::MakeInstance { spec, output } => commands::cmd_make_instance(spec, output.as_deref(), &common),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
