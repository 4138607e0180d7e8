use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    regpipe_cli::init_threads();
    ExitCode::from(regpipe_cli::run(regpipe_cli::Cli::parse()))
}
