mod cli;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};

fn run(cli: Cli) -> error::CliResult {
    match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Smooth(a) => commands::smooth(a),
        Command::Synth(a) => commands::synth(a),
        Command::DesignThresholds(a) => commands::design_thresholds(a),
        Command::Augment(a) => commands::augment(a),
        Command::Bounds(a) => commands::bounds(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version exit 0, parse failures 2
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        // read by the worker pool on first use; nothing has started it yet
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kcounter: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
