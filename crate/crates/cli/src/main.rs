use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retirement_cli::config::{Overrides, RunConfig};
use retirement_cli::{cmd_simulate, cmd_solve, cmd_sweep, cmd_verify, CliError};

#[derive(Parser)]
#[command(name = "retire", version, about = "Optimal voluntary retirement with income disaster and income support")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model; write manifest.json and policy.csv
    Solve(Common),
    /// Solve over a grid of one or two parameters; write sweep.csv
    Sweep(Common),
    /// Simulate life-cycle paths; write paths.csv and summary.json
    Simulate(Common),
    /// Run the verification suite; write verify.json, exit 1 on failure
    Verify {
        #[command(flatten)]
        common: Common,
        /// Multiply the coefficient A by this factor before verifying
        #[arg(long, hide = true)]
        perturb_a: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the Monte Carlo master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Set delta equal to the Merton constant
    #[arg(long)]
    tie_delta_to_k: bool,
    /// Number of policy grid points
    #[arg(long)]
    grid: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides { seed: self.seed, tie_delta_to_k: self.tie_delta_to_k, grid: self.grid });
        Ok(cfg)
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SOLVER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SOLVER_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve(c) => cmd_solve(&c.load()?, &c.out),
        Command::Sweep(c) => cmd_sweep(&c.load()?, &c.out),
        Command::Simulate(c) => cmd_simulate(&c.load()?, &c.out),
        Command::Verify { common, perturb_a } => cmd_verify(&common.load()?, &common.out, perturb_a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
