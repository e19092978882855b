use std::io;
use std::process::ExitCode;

use clap::Parser;
use odsc::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
