use std::process::ExitCode;

use alasso_cli::{execute, parse_args, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = parse_args(std::env::args_os()).and_then(|inv| execute(&inv).map(|_| ()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Clap(_)) => {
            let code = e.exit_code();
            if let CliError::Clap(e) = e {
                let _ = e.print();
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
