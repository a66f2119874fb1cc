use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use pairdesign_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let code = match run(&cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    };
    let _ = lock.flush();
    code
}
