//! `chiselkit verify` — re-check a recovered decomposition.
//!
//! Measures how much of the tensor's mass lies outside the pattern carved by
//! the chisel and the labeling δ when viewed through the given block bases.
//! δ defaults to the decomposition's own block representatives and can be
//! pinned to a ground-truth pattern file instead. Exit 0 means every visible
//! block is on-pattern; a non-conforming decomposition exits 3.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use chiselkit::multiarray::read_tensor;
use chiselkit::pattern::{conformance, read_pattern};
use chiselkit::spectral::{block_norms, read_decomposition};
use chiselkit::{jsonfmt, Error, Result};

use super::{check_tolerances, guard_overwrite};
use crate::selector;

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Input tensor (TNSR v1).
    tensor: PathBuf,

    /// Decomposition JSON, as written by `chiselkit chisel`.
    #[arg(long)]
    decomposition: PathBuf,

    /// Chisel selector (axes 1-based).
    #[arg(long)]
    chisel: String,

    /// Pattern JSON supplying the labeling δ [default: the decomposition's
    /// block representatives].
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Block-mass threshold relative to ‖t‖ below which a coordinate block
    /// counts as empty.
    #[arg(long, default_value_t = 1e-8)]
    block_eps: f64,

    /// Membership tolerance for the pattern's defining row sums.
    #[arg(long, default_value_t = 1e-6)]
    pattern_tol: f64,

    /// Directory for report.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct Report {
    conforms: bool,
    leakage: f64,
    worst_violation: f64,
}

pub fn run(args: &VerifyArgs) -> Result<u8> {
    check_tolerances(&[("block-eps", args.block_eps), ("pattern-tol", args.pattern_tol)])?;
    let t = read_tensor(&args.tensor)?;
    let dec = read_decomposition(&args.decomposition)?;
    let c = selector::resolve(&args.chisel, t.order())?;
    let report_path = args.out_dir.join("report.json");
    guard_overwrite(&args.tensor, std::slice::from_ref(&report_path))?;
    guard_overwrite(&args.decomposition, std::slice::from_ref(&report_path))?;

    let delta = match &args.truth {
        Some(path) => read_pattern(&fs::read_to_string(path)?)?
            .delta()
            .cloned()
            .ok_or_else(|| Error::arg(format!("{} carries no δ labeling", path.display())))?,
        None => dec.delta()?,
    };

    // A threshold above every block norm accepts anything; warn rather than
    // guess what the caller meant.
    let norms = block_norms(&t, &dec)?;
    let max_block = norms.values().iter().map(|z| z.re).fold(0.0f64, f64::max);
    let threshold = args.block_eps * t.frobenius_norm();
    if threshold > max_block {
        eprintln!(
            "warning: --block-eps·‖t‖ = {threshold:.3e} exceeds the largest block norm \
             {max_block:.3e}; every block counts as empty and conformance holds vacuously"
        );
    }

    let conf = conformance(&t, &dec, &c, &delta, args.block_eps, args.pattern_tol)?;
    fs::create_dir_all(&args.out_dir)?;
    let report = Report {
        conforms: conf.conforms,
        leakage: conf.leakage,
        worst_violation: conf.worst_violation,
    };
    fs::write(&report_path, jsonfmt::to_string(&report)?)?;
    println!(
        "{}: leakage {:.3e}, worst violation {:.3e}",
        if conf.conforms { "conforms" } else { "does not conform" },
        conf.leakage,
        conf.worst_violation
    );
    Ok(if conf.conforms { 0 } else { 3 })
}
