use std::io::IsTerminal;
use std::process::ExitCode;

use c3v_cli::{run, Cli, Outcome};
use clap::Parser;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", Outcome::config_error("args", "invalid arguments").status_line());
            return ExitCode::from(2);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .without_time()
        .init();

    let outcome = run(&cli);
    if let Some(m) = &outcome.message {
        eprintln!("error: {m}");
    }
    eprintln!("{}", outcome.status_line());
    ExitCode::from(outcome.code as u8)
}
