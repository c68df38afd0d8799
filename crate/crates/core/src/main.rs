use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use pme_lab::cli::{self, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match cli::run(&cli.command, &cli::runs_root()) {
        Ok((dir, manifest)) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
