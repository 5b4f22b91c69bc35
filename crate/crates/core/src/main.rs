use std::process::ExitCode;

use clap::Parser;
use csyn::cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CSYN_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
