mod docs;
mod error;
mod logs;
mod serve;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Flexible-access assembly instructions: documents, sessions, simulations.
#[derive(Debug, Parser)]
#[command(name = "stepnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Lint an instruction document; exits 1 when it has errors.
    Validate(docs::ValidateArgs),
    /// Print the block index, tag-occurrence histogram and complexity counts.
    Index(docs::IndexArgs),
    /// Run the detection relay.
    ServeRelay(serve::RelayArgs),
    /// Run the session service, with an embedded relay unless --relay-addr is given.
    ServeSession(serve::SessionArgs),
    /// Replay a show script against a relay, or submit tags typed on stdin.
    SimRecognizer(sim::RecognizerArgs),
    /// Simulate an assembler working through a document.
    SimAssembler(sim::AssemblerArgs),
    /// Rebuild a session from its log; exits 1 on a mismatch.
    Replay(logs::ReplayArgs),
    /// Count commands in a session log.
    Metrics(logs::MetricsArgs),
}

/// A document given either positionally or with `--doc`.
#[derive(Debug, Args)]
pub struct DocArg {
    #[arg(value_name = "DOC", conflicts_with = "doc")]
    path: Option<PathBuf>,
    #[arg(long, env = "STEPNAV_DOC", value_name = "DOC")]
    doc: Option<PathBuf>,
}

impl DocArg {
    pub fn get(&self) -> Result<&PathBuf, CliError> {
        self.path
            .as_ref()
            .or(self.doc.as_ref())
            .ok_or_else(|| CliError::Usage("a document is required (DOC or --doc)".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code() as u8;
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Cmd::Validate(a) => docs::validate(a),
        Cmd::Index(a) => docs::index(a),
        Cmd::ServeRelay(a) => serve::relay(a),
        Cmd::ServeSession(a) => serve::session(a),
        Cmd::SimRecognizer(a) => sim::recognizer(a),
        Cmd::SimAssembler(a) => sim::assembler(a),
        Cmd::Replay(a) => logs::replay(a),
        Cmd::Metrics(a) => logs::metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run with --help for usage");
            }
            e.exit_code()
        }
    }
}
