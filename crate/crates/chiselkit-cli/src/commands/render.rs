//! `chiselkit render` — inspect a 3-way tensor on disk.
//!
//! `points.csv` lists every cell whose magnitude clears a relative
//! threshold, one `i,j,k,value` row per cell (1-based indices; complex cells
//! render their modulus). The `slices/` directory gets one 8-bit PGM per
//! slice along the chosen axis, linearly scaled so the tensor's largest
//! magnitude maps to white, plus an `index.csv` naming each file. A clean
//! patterned tensor renders as crisp bright blocks; its scrambled version
//! renders as noise.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;

use chiselkit::multiarray::{read_tensor, Field};
use chiselkit::{Error, Result};

use super::{check_tolerances, guard_overwrite};

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Input tensor (TNSR v1, 3-way).
    tensor: PathBuf,

    /// Slice axis, 1-based.
    #[arg(long, default_value_t = 1)]
    axis: usize,

    /// Magnitude threshold relative to max|t| below which cells are dropped
    /// from points.csv.
    #[arg(long, default_value_t = 1e-8)]
    block_eps: f64,

    /// Directory for points.csv and slices/.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

pub fn run(args: &RenderArgs) -> Result<u8> {
    check_tolerances(&[("block-eps", args.block_eps)])?;
    let t = read_tensor(&args.tensor)?;
    if t.order() != 3 {
        return Err(Error::arg(format!(
            "render supports 3-way tensors only, got order {}",
            t.order()
        )));
    }
    if !(1..=3).contains(&args.axis) {
        return Err(Error::arg(format!("--axis is 1-based (1, 2, or 3), got {}", args.axis)));
    }
    guard_overwrite(&args.tensor, std::slice::from_ref(&args.out_dir.join("points.csv")))?;

    let dims = t.dims().to_vec();
    let max_abs = t.values().iter().map(|z| z.norm()).fold(0.0f64, f64::max);

    // Point list: row-major iteration keeps the file order deterministic.
    let mut csv = String::new();
    let mut count = 0usize;
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let z = t.get(&[i, j, k]);
                let mag = z.norm();
                if mag > args.block_eps * max_abs {
                    let value = if t.field() == Field::Real64 { z.re } else { mag };
                    csv.push_str(&format!("{},{},{},{value:.16e}\n", i + 1, j + 1, k + 1));
                    count += 1;
                }
            }
        }
    }
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("points.csv"), csv)?;

    // Slices: rows run along the smaller remaining axis index, columns along
    // the larger, so axis 1 slices are d₂×d₃ images and so on.
    let a = args.axis - 1;
    let (row_axis, col_axis) = match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let slices_dir = args.out_dir.join("slices");
    fs::create_dir_all(&slices_dir)?;
    let digits = dims[a].to_string().len();
    let mut index = String::new();
    for s in 0..dims[a] {
        let mut pgm = Vec::with_capacity(dims[row_axis] * dims[col_axis] + 32);
        write!(pgm, "P5\n{} {}\n255\n", dims[col_axis], dims[row_axis])?;
        for r in 0..dims[row_axis] {
            for c in 0..dims[col_axis] {
                let mut idx = [0usize; 3];
                idx[a] = s;
                idx[row_axis] = r;
                idx[col_axis] = c;
                let mag = t.get(&idx).norm();
                let pixel = if max_abs > 0.0 {
                    (255.0 * mag / max_abs).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
                pgm.push(pixel);
            }
        }
        let name = format!("slice-{:0digits$}.pgm", s + 1);
        fs::write(slices_dir.join(&name), pgm)?;
        index.push_str(&format!("{},{},{}\n", name, args.axis, s + 1));
    }
    fs::write(slices_dir.join("index.csv"), index)?;
    println!("wrote {count} points and {} slices along axis {}", dims[a], args.axis);
    Ok(0)
}
