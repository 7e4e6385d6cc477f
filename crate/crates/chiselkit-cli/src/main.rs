//! `chiselkit` — carve, scramble, detect, and verify null patterns in dense
//! multiway arrays from the command line.
//!
//! The subcommands compose into the full pipeline: `synth` builds a patterned
//! tensor (optionally scrambled and noised), `chisel` solves the derivation
//! system and recovers the block structure, `verify` re-checks a recovered
//! decomposition against a chisel and labeling, and `render`, `classify`, and
//! `spectrum` are inspection utilities.
//!
//! Exit codes are stable across subcommands:
//!
//! * `0` — success (files written, pattern found, decomposition conforms)
//! * `2` — usage error or malformed input
//! * `3` — legitimate negative outcome (`no_pattern` verdict, non-conforming
//!   decomposition); distinct from an error so scripts can branch on it
//! * `4` — runtime failure (I/O, numerics, non-convergence)

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chiselkit::Error;

mod commands;
mod selector;

use commands::{chisel, classify, render, spectrum, synth, verify};

/// Detect and synthesize null patterns in dense multiway arrays.
#[derive(Parser)]
#[command(name = "chiselkit", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a patterned benchmark tensor (optionally scrambled and noised).
    Synth(synth::SynthArgs),
    /// Solve the derivation system and recover the block decomposition.
    Chisel(chisel::ChiselArgs),
    /// Re-check a recovered decomposition against a chisel and labeling.
    Verify(verify::VerifyArgs),
    /// Dump a 3-way tensor as a point list and per-slice PGM images.
    Render(render::RenderArgs),
    /// Name a 3-column chisel's equivalence class and print its normal form.
    Classify(classify::ClassifyArgs),
    /// Write the small end of the derivation system's singular spectrum.
    Spectrum(spectrum::SpectrumArgs),
}

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 4;

/// Map library errors onto the exit-code contract: malformed requests are
/// usage errors, everything else is a runtime failure.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Argument(_)
        | Error::Format { .. }
        | Error::Spec(_)
        | Error::InfeasibleDelta(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parallelism cap from `CHISELKIT_THREADS` (default: no cap requested).
/// Every kernel in this build is single-threaded, so any cap ≥ 1 is already
/// satisfied; the variable is still validated so a misspelled value fails
/// loudly instead of silently configuring nothing.
fn thread_cap() -> chiselkit::Result<Option<usize>> {
    match std::env::var("CHISELKIT_THREADS") {
        Ok(raw) => {
            let n: usize = raw.trim().parse().map_err(|_| {
                Error::arg(format!("CHISELKIT_THREADS must be a positive integer, got {raw:?}"))
            })?;
            if n == 0 {
                return Err(Error::arg("CHISELKIT_THREADS must be at least 1"));
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(Error::arg("CHISELKIT_THREADS is not valid UTF-8"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version print to stdout and succeed; everything
            // else is a usage error.
            let code = if err.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Err(err) = thread_cap() {
        eprintln!("error: {err}");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = match cli.command {
        Command::Synth(args) => synth::run(&args),
        Command::Chisel(args) => chisel::run(&args),
        Command::Verify(args) => verify::run(&args),
        Command::Render(args) => render::run(&args),
        Command::Classify(args) => classify::run(&args),
        Command::Spectrum(args) => spectrum::run(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
