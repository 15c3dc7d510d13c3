use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use scfdesign::cli::{run, RunConfig};

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    let out = run(&cfg);
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code)
}
