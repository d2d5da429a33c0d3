mod args;
mod commands;
mod output;

use std::io::Write;
use std::process::ExitCode;

use btn_core::Error;
use clap::Parser;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidShape(_)
        | Error::ChannelMismatch { .. }
        | Error::InvalidParameter { .. }
        | Error::SplitTooLarge { .. }
        | Error::DimensionMismatch(_)
        | Error::NotInvertible(_) => EXIT_USAGE,
        Error::Format(_)
        | Error::Io(_)
        | Error::WeightNameMismatch { .. }
        | Error::WeightShapeMismatch { .. }
        | Error::WeightLength { .. } => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("BTN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("BTN_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = std::panic::catch_unwind(|| match &cli.command {
        Command::Summarize(a) => commands::summarize(a),
        Command::Infer(a) => commands::infer(a),
        Command::MemoryPlan(a) => commands::memory_plan(a),
        Command::Theory(t) => commands::theory(t),
    });
    let report = match result {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
        Err(_) => return ExitCode::from(EXIT_INTERNAL),
    };
    let text = match report.render(cli.format) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    };
    let mut stdout = std::io::stdout().lock();
    if stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
        .is_err()
    {
        return ExitCode::from(EXIT_DATA);
    }
    ExitCode::SUCCESS
}
