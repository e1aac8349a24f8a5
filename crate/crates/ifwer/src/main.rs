use std::process::ExitCode;

use clap::Parser;
use ifwer::cli::{self, Cli, Command};
use ifwer::error::{AppError, AppResult};

fn dispatch(cli: Cli) -> AppResult<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate(args) => cli::simulate(&args, &mut stdout),
        Command::Run(args) => cli::run(&args, &mut stdout),
        Command::Serve(args) => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::io("<runtime>", e))?;
            runtime.block_on(ifwer::service::serve(&args.addr, args.data_dir.as_deref()))
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
