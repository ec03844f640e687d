use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = qnms::cli::Cli::parse();
    match qnms::cli::run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
