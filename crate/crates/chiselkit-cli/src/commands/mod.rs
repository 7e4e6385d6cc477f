//! One module per subcommand, plus the flag types and guards they share.

use std::path::{Path, PathBuf};

use clap::ValueEnum;

use chiselkit::derivation::SvdMode;
use chiselkit::{Error, Result};

pub mod chisel;
pub mod classify;
pub mod render;
pub mod spectrum;
pub mod synth;
pub mod verify;

/// Spectrum engine choice, mirrored from the library for clap.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    /// Assemble the system matrix and take its full SVD.
    Dense,
    /// Matrix-free Gram iteration; for systems too large to assemble.
    Iterative,
}

impl From<ModeArg> for SvdMode {
    fn from(mode: ModeArg) -> SvdMode {
        match mode {
            ModeArg::Dense => SvdMode::Dense,
            ModeArg::Iterative => SvdMode::Iterative,
        }
    }
}

/// Reject non-positive or non-finite tolerance flags up front.
pub fn check_tolerances(named: &[(&str, f64)]) -> Result<()> {
    for &(name, value) in named {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::arg(format!("--{name} must be positive and finite, got {value}")));
        }
    }
    Ok(())
}

/// Refuse to overwrite an input file with one of the planned outputs.
/// Outputs that do not exist yet cannot collide with a file we just read.
pub fn guard_overwrite(input: &Path, outputs: &[PathBuf]) -> Result<()> {
    let Ok(canon_in) = input.canonicalize() else {
        return Ok(());
    };
    for out in outputs {
        if let Ok(canon_out) = out.canonicalize() {
            if canon_out == canon_in {
                return Err(Error::arg(format!(
                    "output {} would overwrite the input; pick another --out-dir",
                    out.display()
                )));
            }
        }
    }
    Ok(())
}
