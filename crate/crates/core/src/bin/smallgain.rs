use std::process::ExitCode;

use clap::Parser;
use smallgain::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    match cli::run(args) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(cli::EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("smallgain: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
