use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cloudiff::{run, settings_from_args, Command};

/// Change detection between a prior point cloud and depth from a moving camera.
#[derive(Parser)]
#[command(name = "cloudiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Generate a synthetic dataset directory.
    Synth(Opts),
    /// Temporally filter the depth of a dataset.
    Filter(Opts),
    /// Register a local PLY cloud (`--local`) to a prior (`--prior`).
    Register(Opts),
    /// Fuse odometry with prior localizations.
    Optimize(Opts),
    /// Detect and score changes on a dataset.
    Detect(Opts),
    /// Absolute trajectory error of `--estimated` against `--ground-truth`.
    Evaluate(Opts),
    /// Run `detect` over the values of one parameter.
    Sweep(Opts),
}

#[derive(Args)]
struct Opts {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    overwrite: bool,
    /// Settings as `--key value` pairs, overriding the config file.
    #[arg(value_name = "--KEY VALUE", trailing_var_arg = true, allow_hyphen_values = true)]
    settings: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Sub::Synth(o) => (Command::Synth, o),
        Sub::Filter(o) => (Command::Filter, o),
        Sub::Register(o) => (Command::Register, o),
        Sub::Optimize(o) => (Command::Optimize, o),
        Sub::Detect(o) => (Command::Detect, o),
        Sub::Evaluate(o) => (Command::Evaluate, o),
        Sub::Sweep(o) => (Command::Sweep, o),
    };
    let result = settings_from_args(opts.config.as_deref(), opts.overwrite, &opts.settings)
        .and_then(|settings| run(command, &settings));
    match result {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
