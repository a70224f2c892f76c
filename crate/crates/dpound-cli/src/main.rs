use std::process::ExitCode;

use clap::Parser;
use dpound_cli::{execute, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(dpound_cli::EXIT_INVALID);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e @ CliError::Failed(_)) => {
            let m = e.message();
            if m.ends_with('\n') {
                print!("{m}");
            } else {
                println!("{m}");
            }
            ExitCode::from(e.code())
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
