//! `trustos` command-line entry point.

use std::process::ExitCode;

fn main() -> ExitCode {
    // The server logs requests by default; one-shot commands stay quiet.
    let serving = std::env::args().skip(1).any(|a| a == "serve");
    let default = if serving { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    ExitCode::from(trustos_gateway::cli::run(std::env::args_os(), &mut out, &mut err))
}
