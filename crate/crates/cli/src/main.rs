mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, WORKERS_ENV};

fn workers() -> anyhow::Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
            anyhow::ensure!(n > 0, "{WORKERS_ENV} must be positive");
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| {
        let mut out = std::io::stdout().lock();
        match cli.command {
            Command::Design(a) => commands::design(&a, &mut out),
            Command::Simulate(a) => commands::simulate(&a, &mut out),
            Command::Sweep(a) => commands::sweep(&a, &mut out),
            Command::Compare(a) => commands::compare(&a, &mut out),
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
