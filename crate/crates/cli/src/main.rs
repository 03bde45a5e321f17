//! `fracnmp` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure or replay mismatch, 2 input error,
//! 3 no design solution, 4 unstable simulation.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;
mod plant;

use commands::Command;
use manifest::{compare_outputs, manifest_path, verify_inputs, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "fracnmp", version, about = "Fractional-order partial cancellation of NMP zeros")]
struct Cli {
    #[command(subcommand)]
    command: TopLevel,
}

#[derive(Debug, Subcommand)]
enum TopLevel {
    #[command(flatten)]
    Run(Command),

    /// Re-run a recorded manifest and check outputs are bit-identical
    Replay {
        manifest: PathBuf,

        /// Write to this prefix instead of the recorded one
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Core(fracnmp::Error),
    Io(PathBuf, io::Error),
    Mismatch(String),
}

impl CliError {
    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(path.to_path_buf(), e)
    }

    fn exit_code(&self) -> u8 {
        use fracnmp::Error as E;
        match self {
            CliError::Input(_) => 2,
            CliError::Core(E::NoSolution { .. } | E::NoCancellerOrder { .. }) => 3,
            CliError::Core(E::Divergence { .. } | E::UnstablePlant(_)) => 4,
            CliError::Core(_) => 2,
            CliError::Io(..) | CliError::Mismatch(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            CliError::Mismatch(m) => write!(f, "replay mismatch: {m}"),
        }
    }
}

impl From<fracnmp::Error> for CliError {
    fn from(e: fracnmp::Error) -> Self {
        CliError::Core(e)
    }
}

fn execute(cmd: &Command, argv: Vec<String>) -> Result<(), CliError> {
    let outcome = cmd.run()?;
    if let (Some(prefix), false) = (cmd.out(), outcome.outputs.is_empty()) {
        RunManifest::new(cmd, argv, &cmd.input_files(), &outcome.outputs)?.write(&manifest_path(&prefix))?;
    }
    io::stdout().write_all(outcome.stdout.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn replay(path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let m = RunManifest::read(path)?;
    verify_inputs(&m)?;
    let mut cmd = m.params.clone();
    if let Some(prefix) = out {
        cmd.set_out(prefix);
    }
    let outcome = cmd.run()?;
    compare_outputs(&m.outputs, &outcome.outputs)?;
    println!("reproduced {} output(s) bit-identically", outcome.outputs.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        TopLevel::Run(cmd) => execute(&cmd, std::env::args().collect()),
        TopLevel::Replay { manifest, out } => replay(&manifest, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
