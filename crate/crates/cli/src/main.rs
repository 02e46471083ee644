mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command, FileConfig, Globals, Merge, DEFAULT_SEED};

/// Failure carrying its exit code: 1 for runtime failures, 2 for usage and
/// configuration errors.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<czsl::Error> for CliError {
    fn from(e: czsl::Error) -> Self {
        match e {
            czsl::Error::Config(_) | czsl::Error::Vocabulary { .. } => Self::usage(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        data: cli.data.or(file.data),
        out: cli.out.or(file.out),
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&globals, a.merge(file.synth)),
        Command::Train(a) => commands::train(&globals, a.merge(file.train)),
        Command::Eval(a) => commands::eval(&globals, a.merge(file.eval)),
        Command::Retrieve(a) => commands::retrieve(&globals, a.merge(file.retrieve)),
        Command::Gradcheck(a) => commands::gradcheck(&globals, a.merge(file.gradcheck)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
