use std::process::ExitCode;

use clap::Parser;
use medqa::config::SEED_ENV;
use medqa::{execute, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let seed = std::env::var(SEED_ENV).ok();
    match execute(&cli, seed.as_deref()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("medqa: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
