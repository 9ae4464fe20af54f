mod args;
mod commands;
mod config;

use std::process::ExitCode;

use alignqa::Execution;
use clap::Parser;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    let mismatch = err
        .chain()
        .filter_map(|e| e.downcast_ref::<alignqa::Error>())
        .any(alignqa::Error::is_data_mismatch);
    if mismatch {
        EXIT_MISMATCH
    } else {
        EXIT_USAGE
    }
}

fn execution(threads: Option<usize>) -> anyhow::Result<Execution> {
    match threads {
        Some(0) => anyhow::bail!("--threads must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = execution(cli.threads).and_then(|exec| match &cli.command {
        Command::Index(a) => commands::index(a),
        Command::Rank(a) => commands::rank(a, exec),
        Command::Eval(a) => commands::eval(a),
        Command::Tune(a) => commands::tune(a, exec),
        Command::Significance(a) => commands::significance(a, exec),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
