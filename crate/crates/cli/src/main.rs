mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use output::Session;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors with exit code 2 and help/version with 0
            e.exit();
        }
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let session = Session::new(argv, cli.force, cli.timing);

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", session.error_json(&output::Failure::new("internal", e.to_string())));
            return ExitCode::from(1);
        }
    }

    match commands::run(&cli.command, &session) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", session.error_json(&failure));
            ExitCode::from(1)
        }
    }
}
