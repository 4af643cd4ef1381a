mod args;
mod commands;
mod config;
mod failure;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::EXIT_OK;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COEXIST_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = config::load(cli.config.as_deref()).and_then(|file| match &cli.command {
        Command::Generate(a) => commands::generate(a, &file),
        Command::GenDataset(a) => commands::gen_dataset(a, &file),
        Command::Calibrate(a) => commands::calibrate(a, &file),
        Command::Detect(a) => commands::detect(a, &file),
        Command::Run(a) => commands::run(a, &file),
        Command::InitWeights(a) => commands::init_weights(a, &file),
        Command::Fixture(a) => commands::fixture(a, &file),
        Command::Parity(a) => commands::parity(a, &file),
    });
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
