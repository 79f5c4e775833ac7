mod args;
mod commands;
mod config;
mod error;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use error::{exit, CliError};

fn run(argv: Vec<OsString>) -> Result<(), CliError> {
    let argv = config::expand(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return Err(CliError::usage("invalid arguments"));
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build_global()
        .map_err(|e| CliError::new(exit::VERIFICATION, e.to_string()))?;
    let t = cli.threads;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a, t),
        Command::Train(a) => commands::train_cmd(a, t),
        Command::Predict(a) => commands::predict_cmd(a, t),
        Command::Eval(a) => commands::eval_cmd(a, t),
        Command::Bench(a) => commands::bench_cmd(a, t),
        Command::Gradcheck(a) => commands::gradcheck_cmd(a),
    }
}

fn main() {
    let code = match run(std::env::args_os().collect()) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    std::process::exit(code);
}
