//! The `opticenter` command line: simulation, estimation, benchmarking and
//! the bead-volume pipeline, with a JSON manifest written for every run.

mod cli;
mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

pub use cli::{Cli, Command, SEED_ENV};
pub use manifest::RunManifest;

/// Exit status for bad flags or arguments.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for failures while computing.
pub const EXIT_COMPUTE: i32 = 2;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Compute(e.into())
    }
}

/// What a command read and wrote, plus its console summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub summary: String,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    if let Command::Replay(r) = &cli.command {
        return match RunManifest::read(&r.manifest_path) {
            Ok(m) => run(m.argv),
            Err(e) => {
                eprintln!("error: {e:#}");
                EXIT_USAGE
            }
        };
    }

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_COMPUTE;
        }
    };
    let started = Instant::now();
    let result = pool.install(|| commands::execute(&cli.command));
    let threads = pool.current_num_threads();
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();

    match result {
        Ok(outcome) => {
            let manifest = RunManifest::new(&cli, argv, &outcome, threads, started.elapsed(), None);
            if let Err(e) = manifest.write(&manifest_path(&cli, &outcome)) {
                eprintln!("error: writing manifest: {e:#}");
                return EXIT_COMPUTE;
            }
            if !outcome.summary.is_empty() {
                println!("{}", outcome.summary.trim_end());
            }
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Compute(e)) => {
            let message = format!("{e:#}");
            eprintln!("error: {message}");
            println!("{}", serde_json::json!({ "error": message }));
            let outcome = Outcome::default();
            let manifest = RunManifest::new(
                &cli,
                argv,
                &outcome,
                threads,
                started.elapsed(),
                Some(message),
            );
            if let Some(path) = cli
                .manifest
                .clone()
                .or_else(|| commands::primary_output(&cli.command))
            {
                let _ = manifest.write(&manifest::default_location(&path, cli.manifest.is_some()));
            }
            EXIT_COMPUTE
        }
    }
}

fn manifest_path(cli: &Cli, outcome: &Outcome) -> PathBuf {
    match (&cli.manifest, commands::primary_output(&cli.command)) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => manifest::default_location(&out, false),
        (None, None) => manifest::default_location(&outcome.outputs[0], false),
    }
}
