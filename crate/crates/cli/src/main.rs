use std::process::ExitCode;

use clap::Parser;

use qxform_cli::{log_level, run, Cli};

fn main() -> ExitCode {
    let level = match log_level(std::env::var("QXFORM_LOG").ok().as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            return ExitCode::from(e.exit as u8);
        }
    };
    env_logger::Builder::new().filter_level(level).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = qxform_cli::CliError::validation(e.to_string().lines().next().unwrap_or("bad arguments"));
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.exit as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit as u8)
        }
    }
}
