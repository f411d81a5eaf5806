//! Command-line front end: `expdirac <command> --config <path> [--out <dir>] [--seed <n>]`.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

pub use commands::{
    cmd_optimize, cmd_solve, cmd_taylor, cmd_verify, exit_code, num, Outcome, EXIT_BUDGET, EXIT_CONFIG, EXIT_ESTIMATE,
    EXIT_OK, EXIT_SOLVER,
};
pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Optimize,
    Verify,
    Taylor,
}

#[derive(Debug, Parser)]
#[command(name = "expdirac", version, about = "Exponential semilinear Dirac control solver")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = RunConfig::from_path(&cli.config).and_then(|mut cfg| {
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        match cli.command {
            Command::Solve => cmd_solve(&cfg, &cli.out),
            Command::Optimize => cmd_optimize(&cfg, &cli.out),
            Command::Verify => cmd_verify(&cfg, &cli.out),
            Command::Taylor => cmd_taylor(&cfg, &cli.out),
        }
    });
    match result {
        Ok(o) => {
            if let Some(m) = o.message {
                eprintln!("{m}");
            }
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args`; usage errors map to the config exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
