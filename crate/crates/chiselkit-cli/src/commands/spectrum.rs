//! `chiselkit spectrum` — dump the small end of the singular spectrum.
//!
//! Writes `sigma.csv` with the q smallest singular values of the derivation
//! system (`rank,value` rows, ascending) followed by `sigma_max` and `gap`
//! rows, for tolerance studies around the detection threshold. No verdict is
//! taken here; pair it with `chisel` for that.

use std::fs;
use std::path::PathBuf;

use clap::Args;

use chiselkit::derivation::{svd_spectrum, SystemOperator};
use chiselkit::multiarray::read_tensor;
use chiselkit::Result;

use super::{guard_overwrite, ModeArg};
use crate::selector;

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    /// Input tensor (TNSR v1).
    tensor: PathBuf,

    /// Chisel selector (axes 1-based).
    #[arg(long)]
    chisel: String,

    /// How many of the smallest singular values to extract [default: e+2,
    /// which is also the minimum].
    #[arg(long)]
    q: Option<usize>,

    /// Spectrum engine.
    #[arg(long, value_enum, default_value_t = ModeArg::Dense)]
    mode: ModeArg,

    /// Directory for sigma.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

pub fn run(args: &SpectrumArgs) -> Result<u8> {
    let t = read_tensor(&args.tensor)?;
    let c = selector::resolve(&args.chisel, t.order())?;
    guard_overwrite(&args.tensor, std::slice::from_ref(&args.out_dir.join("sigma.csv")))?;
    let op = SystemOperator::new(&t, &c)?;
    let e = c.scalar_nullspace().1;
    let q = args.q.unwrap_or(e + 2);
    let report = svd_spectrum(&op, q, args.mode.into())?;

    let mut csv = String::new();
    for (i, sigma) in report.sigma.iter().enumerate() {
        csv.push_str(&format!("{},{sigma:.16e}\n", i + 1));
    }
    csv.push_str(&format!("sigma_max,{:.16e}\n", report.sigma_max));
    let gap = if report.gap.is_finite() { report.gap } else { f64::MAX };
    csv.push_str(&format!("gap,{gap:.16e}\n"));
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("sigma.csv"), csv)?;
    println!(
        "σ_{{e+1}} = {:.3e}, σ_max = {:.3e} (e = {e}, q = {q})",
        report.sigma_e_plus_1(),
        report.sigma_max
    );
    Ok(0)
}
