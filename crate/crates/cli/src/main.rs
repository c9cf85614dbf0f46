mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use manifest::RunManifest;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }

    let seed = cli.seed.unwrap_or(0);
    let mut ctx = Context {
        seed,
        seed_given: cli.seed.is_some(),
        workers: cli.workers,
        out_csv: cli.out_csv.clone(),
        manifest: RunManifest::new(seed),
    };
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a, &mut ctx),
        Command::Simulate(a) => commands::simulate(a, &mut ctx),
        Command::Check(a) => commands::check(a, &mut ctx),
        Command::Gencov(a) => commands::gencov(a, &mut ctx),
        Command::Precision(a) => commands::precision(a, &mut ctx),
    };

    if !cli.quiet {
        if let Ok(m) = serde_json::to_string(&ctx.manifest) {
            eprintln!("manifest: {m}");
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if msg.starts_with(e.kind()) {
                eprintln!("error: {msg}");
            } else {
                eprintln!("error: {}: {msg}", e.kind());
            }
            ExitCode::from(2)
        }
    }
}
