//! `mmfc`: detection, evaluation, curation, recording and the review service.
//!
//! Exit codes: 0 ok, 1 usage, 2 partial per-item failures, 3 fatal.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{GlobalArgs, RunArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Fatal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Fatal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Fatal(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Fatal(e.to_string())
    }
}

/// Whether every item succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Partial,
}

#[derive(Debug, Parser)]
#[command(name = "mmfc", version, about = "Evidence-based misinformation detection for image-text posts")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// A JSONL file of posts, a single-post .json file, or a directory of them.
    input: PathBuf,
    /// Write one JSON line per post here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline on posts and print a verdict line per post.
    Detect(DetectArgs),
    /// Retrieve (and filter) evidence only; one bundle per line.
    Retrieve(DetectArgs),
    /// Score a labelled dataset and write a report.
    Evaluate(commands::EvaluateArgs),
    /// Detect in record mode, filling the response cache.
    Record(DetectArgs),
    /// Select topic-matched real posts, or print dataset statistics.
    #[command(subcommand)]
    Curate(commands::CurateCommand),
    /// Run the review service.
    Serve(commands::ServeArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = commands::init_jobs(&cli.global).and_then(|settings| match cli.command {
        Command::Detect(a) => commands::detect(&cli.global, &settings, &a.input, a.out.as_deref(), &a.run, None),
        Command::Record(a) => commands::record(&cli.global, &settings, &a.input, a.out.as_deref(), &a.run),
        Command::Retrieve(a) => commands::retrieve(&cli.global, &settings, &a.input, a.out.as_deref(), &a.run),
        Command::Evaluate(a) => commands::evaluate(&cli.global, &settings, &a),
        Command::Curate(c) => commands::curate(&cli.global, &settings, &c),
        Command::Serve(a) => commands::serve(&cli.global, &settings, &a),
    });
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
