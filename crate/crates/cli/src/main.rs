//! `dasco`: dataset generation, training, evaluation, theory checks and the
//! GAN demo behind one binary.

mod config;
mod data;
mod gan;
mod theory;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dasco_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "dasco",
    version,
    about = "Offline RL with a dual-generator support constraint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out the scripted behavior policy into an offline dataset.
    GenData(data::GenDataArgs),
    /// Train the agent (or a behavior-cloning baseline) on a dataset.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint's deterministic policy.
    Eval(train::EvalArgs),
    /// Discrete-space optima and their verification.
    #[command(subcommand)]
    Theory(theory::TheoryCommand),
    /// Train the 1D/2D dual-generator GAN on mixture data.
    GanDemo(gan::GanDemoArgs),
}

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Dimension(_) | Error::Contract(_) => Failure::Usage(msg),
            Error::Io { .. } | Error::Format { .. } => Failure::Io(msg),
            Error::Numeric(_) => Failure::Numeric(msg),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

fn init_logging() {
    let level = match std::env::var("DASCO_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => data::run(a),
        Command::Train(a) => train::run_train(a),
        Command::Eval(a) => train::run_eval(a),
        Command::Theory(c) => theory::run(c),
        Command::GanDemo(a) => gan::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
