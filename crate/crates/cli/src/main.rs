//! `commgen`: staged command-line driver for the genealogy pipeline.

mod args;
mod manifest;
mod stages;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

/// A failure sorted by who has to act on it.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, missing inputs or stages run out of order.
    User(anyhow::Error),
    /// Broken invariants inside the pipeline.
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let internal = err.chain().any(|cause| {
            matches!(
                cause.downcast_ref::<commgen::Error>(),
                Some(commgen::Error::Integrity(_) | commgen::Error::NonFinite(_))
            )
        });
        if internal {
            Failure::Internal(err)
        } else {
            Failure::User(err)
        }
    }
}

impl From<commgen::Error> for Failure {
    fn from(err: commgen::Error) -> Self {
        Failure::from(anyhow::Error::new(err))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match stages::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(err)) => {
            eprintln!("internal error: {err:#}");
            ExitCode::from(2)
        }
    }
}
